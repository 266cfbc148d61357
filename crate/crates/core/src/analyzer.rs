//! Case dispatch and the pointbased tests: the out-of-kernel characterization,
//! the in-kernel `χ₁, χ₂, χ₃` estimates with their verdict, and the simplified test.

use std::cell::OnceCell;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::extreal;
use crate::linalg;
use crate::lorentz::ConePoint;
use crate::problem::Instance;
use crate::quadmin;
use crate::subsolver::{self, LpStatus, MultiplierSlice};
use crate::variational::{self, QuadrupleZ, RhoForm};

#[derive(Debug, Clone, Copy)]
pub struct AnalyzerOpts {
    /// Angular spacing of the direction grid on the unit sphere of `ker ∇g(x̄)`.
    pub grid_h: f64,
    /// Extra seeded random directions on top of the grid.
    pub budget: usize,
    /// Multipliers sampled when a whole slice is optimal.
    pub lambda_samples: usize,
    /// Largest grid evaluated exhaustively; beyond it the spacing is doubled.
    pub max_grid: usize,
}

impl Default for AnalyzerOpts {
    fn default() -> Self {
        AnalyzerOpts { grid_h: 0.05, budget: 200, lambda_samples: 24, max_grid: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub enum Case {
    InKernel,
    OutOfKernel(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CaseTag {
    InKernel,
    OutOfKernel { u_bar: Vec<f64>, lambda_bar: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub w: Option<Vec<f64>>,
    #[serde(with = "extreal")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiEntry {
    #[serde(with = "extreal")]
    pub value: f64,
    pub certificate: Option<Certificate>,
}

impl ChiEntry {
    fn infinite() -> Self {
        ChiEntry { value: f64::INFINITY, certificate: None }
    }

    fn offer(&mut self, value: f64, cert: impl FnOnce() -> Certificate) {
        if value < self.value {
            self.value = value;
            self.certificate = Some(cert());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChiValues {
    pub chi1: Option<ChiEntry>,
    pub chi2: Option<ChiEntry>,
    pub chi3: Option<ChiEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum Verdict {
    TiltStable {
        #[serde(with = "extreal")]
        bound: f64,
        infimum_not_attained: bool,
        heuristic: bool,
    },
    NotTiltStable {
        condition: String,
        witness: Certificate,
    },
    Inconclusive {
        reason: String,
    },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::TiltStable { .. } => "TILT_STABLE",
            Verdict::NotTiltStable { .. } => "NOT_TILT_STABLE",
            Verdict::Inconclusive { .. } => "INCONCLUSIVE",
        }
    }

    pub fn bound(&self) -> Option<f64> {
        match self {
            Verdict::TiltStable { bound, .. } => Some(*bound),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum SimplifiedOutcome {
    Passes {
        #[serde(with = "extreal")]
        margin: f64,
    },
    Fails {
        u: Vec<f64>,
        lambda: Vec<f64>,
        #[serde(with = "extreal")]
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum TwoRegularity {
    NotApplicable,
    /// Every sampled direction with `q = 0` passed the rank test.
    Sampled { directions: usize },
    Violated { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    #[serde(with = "extreal")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisVerdict {
    pub case: CaseTag,
    pub verdict: Verdict,
    pub chi: ChiValues,
    /// Minimum of the out-of-kernel second-order form over the critical cone with `λ̄`.
    pub out_of_kernel_min: Option<ChiEntry>,
    pub simplified_test: SimplifiedOutcome,
    pub two_regularity: TwoRegularity,
    pub diagnostics: Vec<Diagnostic>,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

fn diag(name: &str, value: f64) -> Diagnostic {
    Diagnostic { name: name.to_string(), value }
}

pub fn classify_case(inst: &Instance) -> Case {
    match subsolver::out_of_kernel_probe(inst) {
        (true, Some(u)) => Case::OutOfKernel(u),
        _ => Case::InKernel,
    }
}

pub fn analyze(inst: &Instance, opts: &AnalyzerOpts) -> AnalysisVerdict {
    match classify_case(inst) {
        Case::OutOfKernel(u) => out_kernel_check_with(inst, &u, opts),
        Case::InKernel => in_kernel_verdict(inst, opts),
    }
}

/// Minimum of the Lagrangian form over `{u ∈ S : ⟨λ, ∇g(x̄)u⟩ = 0, λ₀(...) = 0}`
/// plus any extra linear constraints; `None` when that set is empty.
fn min_over_u(inst: &Instance, m: &DMatrix<f64>, lambda: &DVector<f64>, extra: &[DVector<f64>]) -> Option<quadmin::SphereMin> {
    let (a, c) = variational::u_constraints(inst, lambda);
    let mut rows = vec![a];
    rows.extend(extra.iter().cloned());
    quadmin::minimize(m, &rows, c.as_ref())
}

// Out-of-kernel -----------------------------------------------------------

pub fn out_kernel_check(inst: &Instance) -> AnalysisVerdict {
    match classify_case(inst) {
        Case::OutOfKernel(u) => out_kernel_check_with(inst, &u, &AnalyzerOpts::default()),
        Case::InKernel => AnalysisVerdict {
            case: CaseTag::InKernel,
            verdict: Verdict::Inconclusive { reason: "instance is in the in-kernel case".into() },
            chi: ChiValues::default(),
            out_of_kernel_min: None,
            simplified_test: SimplifiedOutcome::Passes { margin: f64::INFINITY },
            two_regularity: TwoRegularity::NotApplicable,
            diagnostics: vec![],
        },
    }
}

fn out_kernel_check_with(inst: &Instance, u_bar: &DVector<f64>, opts: &AnalyzerOpts) -> AnalysisVerdict {
    let margin = inst.tol.margin;
    let simplified_test = simplified_out_kernel(inst, u_bar, None, opts);
    let lb = match variational::lambda_bar(inst, u_bar) {
        Ok(l) => l,
        Err(e) => {
            return AnalysisVerdict {
                case: CaseTag::OutOfKernel { u_bar: vec_of(u_bar), lambda_bar: None },
                verdict: Verdict::Inconclusive { reason: e.to_string() },
                chi: ChiValues::default(),
                out_of_kernel_min: None,
                simplified_test,
                two_regularity: TwoRegularity::NotApplicable,
                diagnostics: vec![],
            }
        }
    };
    let m = variational::lagrangian_hessian(inst, &lb);
    let found = min_over_u(inst, &m, &lb, &[]);
    let mut entry = ChiEntry::infinite();
    if let Some(r) = &found {
        entry.offer(r.value, || Certificate { u: vec_of(&r.u), lambda: vec_of(&lb), v: None, w: None, value: r.value });
    }
    let mu = entry.value;
    let verdict = if mu.is_infinite() {
        Verdict::TiltStable { bound: 0.0, infimum_not_attained: true, heuristic: false }
    } else if mu > margin {
        Verdict::TiltStable { bound: 1.0 / mu, infimum_not_attained: false, heuristic: false }
    } else if mu < -margin {
        Verdict::NotTiltStable {
            condition: "out-of-kernel necessary condition".into(),
            witness: entry.certificate.clone().expect("finite minimum has a witness"),
        }
    } else {
        Verdict::Inconclusive { reason: format!("minimum {mu:.3e} lies inside the margin band") }
    };
    AnalysisVerdict {
        case: CaseTag::OutOfKernel { u_bar: vec_of(u_bar), lambda_bar: Some(vec_of(&lb)) },
        verdict,
        chi: ChiValues::default(),
        out_of_kernel_min: Some(entry),
        simplified_test,
        two_regularity: TwoRegularity::NotApplicable,
        diagnostics: vec![diag("out_kernel_min", mu)],
    }
}

fn simplified_out_kernel(inst: &Instance, u_bar: &DVector<f64>, kappa: Option<f64>, opts: &AnalyzerOpts) -> SimplifiedOutcome {
    let k = variational::critical_cone(inst);
    let slice = variational::multiplier_slice(inst);
    let mut dirs = vec![u_bar.clone()];
    for y in sphere_grid(inst.n, opts.grid_h.max(0.1), opts.max_grid) {
        let y = DVector::from_vec(y);
        if k.contains(&y, 1e-9) {
            dirs.push(y);
        }
    }
    let mut lambdas = Vec::new();
    for v in &dirs {
        if let Ok(r) = variational::directional_unchecked(inst, &slice, v) {
            if let Some(l) = r.argmax {
                lambdas.push(l);
            }
        }
    }
    simplified_over(inst, &lambdas, kappa)
}

fn simplified_over(inst: &Instance, lambdas: &[DVector<f64>], kappa: Option<f64>) -> SimplifiedOutcome {
    let thr = kappa.map_or(inst.tol.margin, |k| 1.0 / k);
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for l in lambdas {
        let m = variational::lagrangian_hessian(inst, l);
        if let Some(r) = min_over_u(inst, &m, l, &[]) {
            if best.as_ref().map_or(true, |b| r.value < b.0) {
                best = Some((r.value, r.u, l.clone()));
            }
        }
    }
    match best {
        Some((v, u, l)) if v <= thr => SimplifiedOutcome::Fails { u: vec_of(&u), lambda: vec_of(&l), value: v },
        Some((v, _, _)) => SimplifiedOutcome::Passes { margin: v },
        None => SimplifiedOutcome::Passes { margin: f64::INFINITY },
    }
}

// Direction grids ----------------------------------------------------------

/// Points of the unit sphere in `R^p` with angular spacing about `h`, one per
/// antipodal pair. Returns an empty list when the grid would exceed `cap`.
pub fn sphere_grid(p: usize, h: f64, cap: usize) -> Vec<Vec<f64>> {
    fn rec(p: usize, h: f64, cap: usize, out: &mut Vec<Vec<f64>>, prefix: &mut Vec<f64>, scale: f64) -> bool {
        if p == 1 {
            for s in [1.0, -1.0] {
                let mut pt = prefix.clone();
                pt.push(s * scale);
                out.push(pt);
                if out.len() > cap {
                    return false;
                }
            }
            return true;
        }
        let n = (std::f64::consts::PI / h).ceil().max(1.0) as usize;
        for j in 0..=n {
            let phi = std::f64::consts::PI * j as f64 / n as f64;
            let (c, s) = (phi.cos(), phi.sin());
            prefix.push(c * scale);
            let ok = if s * scale < 1e-12 {
                let mut pt = prefix.clone();
                pt.extend(std::iter::repeat(0.0).take(p - 1));
                out.push(pt);
                out.len() <= cap
            } else {
                rec(p - 1, (h / s).min(std::f64::consts::PI), cap, out, prefix, scale * s)
            };
            prefix.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    if p == 0 {
        return vec![];
    }
    let mut out = Vec::new();
    if !rec(p, h, cap.saturating_mul(2), &mut out, &mut Vec::new(), 1.0) {
        return vec![];
    }
    let mut half: Vec<Vec<f64>> = out
        .into_iter()
        .filter(|v| v.iter().find(|x| x.abs() > 1e-12).map_or(false, |x| *x > 0.0))
        .collect();
    half.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    half
}

fn random_unit(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    loop {
        let y = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
        let n = y.norm();
        if n > 1e-3 && n <= 1.0 {
            let mut y = y / n;
            linalg::fix_sign(&mut y);
            return y;
        }
    }
}

// In-kernel scan -----------------------------------------------------------

/// Everything the in-kernel tests need, from one pass over directions `v`.
#[derive(Debug, Clone)]
pub struct KernelScan {
    pub chi1: ChiEntry,
    pub chi2: ChiEntry,
    pub chi3: ChiEntry,
    pub simplified: Option<(f64, DVector<f64>, DVector<f64>)>,
    pub quadruples: Vec<QuadrupleZ>,
    /// Directions `v` carrying a quadruple with `q = 0`.
    pub q_zero_dirs: Vec<DVector<f64>>,
    pub unbounded_at: Option<DVector<f64>>,
    pub heuristic: bool,
    pub evaluations: usize,
    pub kernel_dim: usize,
}

struct Ctx<'a> {
    inst: &'a Instance,
    slice: MultiplierSlice,
    kernel: DMatrix<f64>,
    grad_zero: bool,
    lam_samples: OnceCell<Vec<DVector<f64>>>,
    lambda_samples: usize,
    hess_f_min: (f64, DVector<f64>),
}

#[derive(Default)]
struct VEval {
    chi1: Option<(f64, Certificate)>,
    chi2: Option<(f64, Certificate)>,
    chi3: Option<(f64, Certificate)>,
    simplified: Option<(f64, DVector<f64>, DVector<f64>)>,
    quads: Vec<QuadrupleZ>,
    q_zero: bool,
    unbounded: bool,
    sampled: bool,
}

fn keep_min(slot: &mut Option<(f64, Certificate)>, value: f64, cert: impl FnOnce() -> Certificate) {
    if slot.as_ref().map_or(true, |(v, _)| value < *v) {
        *slot = Some((value, cert()));
    }
}

impl<'a> Ctx<'a> {
    fn new(inst: &'a Instance, opts: &AnalyzerOpts) -> Self {
        let jac = &inst.base_g().jac;
        let kernel = linalg::null_space(jac, inst.tol.rank);
        let hess_f_min = linalg::min_eig(&inst.base_f().hess);
        Ctx {
            inst,
            slice: variational::multiplier_slice(inst),
            kernel,
            grad_zero: variational::grad_f_vanishes(inst),
            lam_samples: OnceCell::new(),
            lambda_samples: opts.lambda_samples,
            hess_f_min,
        }
    }

    /// Deterministic sample of `Λ` used when every multiplier is optimal.
    fn samples(&self) -> &[DVector<f64>] {
        self.lam_samples.get_or_init(|| {
            let s = &self.slice;
            let dim = 1 + self.inst.m;
            let mut out = Vec::new();
            let zero = DVector::zeros(dim);
            if let Some(l) = subsolver::maximize_linear(s, &zero, None).argmax {
                out.push(l);
            }
            if let Some(l) = subsolver::feasibility(s) {
                out.push(l);
            }
            let bound = 2.0 * (s.offset.norm() + 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(self.inst.seed ^ 0x5eed_1a4b);
            let mut dirs: Vec<DVector<f64>> = Vec::new();
            for j in 0..s.dim() {
                let c = s.basis.column(j).into_owned();
                dirs.push(c.clone());
                dirs.push(-c);
            }
            while dirs.len() < self.lambda_samples {
                dirs.push(random_unit(&mut rng, dim));
            }
            for d in dirs {
                let r = subsolver::maximize_linear(s, &d, Some(bound));
                if r.status == LpStatus::Optimal {
                    if let Some(l) = r.argmax {
                        out.push(l);
                    }
                }
            }
            out
        })
    }

    fn eval(&self, v: &DVector<f64>) -> VEval {
        let inst = self.inst;
        let gb = inst.base_g();
        let jac = &gb.jac;
        let tol = 1e-9;
        let mut out = VEval::default();
        let d = gb.second_order_action(v, v);
        let lp = subsolver::maximize_linear(&self.slice, &d, None);
        if lp.status == LpStatus::Unbounded {
            out.unbounded = true;
            return out;
        }
        let Some(lam_v) = lp.argmax.clone() else { return out };
        let hess_f = &inst.base_f().hess;
        let c1 = v.dot(&(hess_f * v)) + lp.value;
        out.chi1 = Some((c1, Certificate { u: vec_of(v), lambda: vec_of(&lam_v), v: None, w: None, value: c1 }));

        let lambdas: Vec<DVector<f64>> = if lp.whole_slice && self.slice.dim() > 0 {
            out.sampled = true;
            let mut l = vec![lam_v.clone()];
            l.extend(self.samples().iter().cloned());
            l
        } else {
            vec![lam_v]
        };
        for l in &lambdas {
            let m = variational::lagrangian_hessian(inst, l);
            if let Some(r) = min_over_u(inst, &m, l, &[]) {
                if out.simplified.as_ref().map_or(true, |b| r.value < b.0) {
                    out.simplified = Some((r.value, r.u, l.clone()));
                }
            }
        }

        let half = &d * 0.5;
        let (w0, res0) = linalg::lstsq(jac, &(-&half), inst.tol.rank);
        let q_zero_ok = res0 <= tol * (1.0 + half.norm());
        if self.grad_zero {
            // Λ⁰ = {0}: ρ vanishes and U(0) is the whole sphere.
            let (val, u) = self.hess_f_min.clone();
            let zero = DVector::zeros(1 + inst.m);
            let cert = |w: &DVector<f64>| Certificate { u: vec_of(&u), lambda: vec_of(&zero), v: Some(vec_of(v)), w: Some(vec_of(w)), value: val };
            if q_zero_ok {
                out.q_zero = true;
                keep_min(&mut out.chi2, val, || cert(&w0));
                out.quads.push(QuadrupleZ::new(inst, u.clone(), zero.clone(), v.clone(), w0.clone()));
            } else if let Some(w) = nonzero_q_point(jac, &half) {
                keep_min(&mut out.chi2, val, || cert(&w));
                keep_min(&mut out.chi3, val, || cert(&w));
                out.quads.push(QuadrupleZ::new(inst, u.clone(), zero, v.clone(), w));
            }
            return out;
        }
        for l in &lambdas {
            let ln = l.norm();
            if ln <= 1e-9 {
                continue;
            }
            let m = variational::lagrangian_hessian(inst, l);
            let Ok(rf) = variational::rho_form(inst, l, v) else { continue };
            let interior = subsolver::dual_depth(l) > 1e-8 * ln;
            if interior {
                if q_zero_ok {
                    self.q_zero_stratum(&mut out, &m, l, v, &w0, &rf);
                }
                continue;
            }
            let hat = ConePoint::from_vec(l).hat().to_vec() / ln;
            let n = inst.n;
            let mut aug = DMatrix::zeros(1 + inst.m, n + 1);
            aug.columns_mut(0, n).copy_from(jac);
            aug.set_column(n, &(-&hat));
            let (sol, res) = linalg::lstsq(&aug, &(-&half), inst.tol.rank);
            if res > tol * (1.0 + half.norm()) {
                continue;
            }
            let (_, res_h) = linalg::lstsq(jac, &hat, inst.tol.rank);
            if res_h <= tol {
                // q0 can be made arbitrarily large: the ρ term vanishes in the limit.
                if q_zero_ok {
                    self.q_zero_stratum(&mut out, &m, l, v, &w0, &rf);
                }
                let extra: Vec<DVector<f64>> = rf.extra.iter().cloned().collect();
                if let Some(r) = min_over_u(inst, &m, l, &extra) {
                    let w = w0.clone();
                    keep_min(&mut out.chi3, r.value, || Certificate { u: vec_of(&r.u), lambda: vec_of(l), v: Some(vec_of(v)), w: Some(vec_of(&w)), value: r.value });
                    self.rho_zero(&mut out, &m, l, v, &w, &rf);
                }
                continue;
            }
            let beta = sol[n];
            let w = sol.rows(0, n).into_owned();
            if beta.abs() <= tol {
                self.q_zero_stratum(&mut out, &m, l, v, &w, &rf);
            } else if beta > 0.0 {
                let q0 = beta * hat[0];
                let extra: Vec<DVector<f64>> = rf.extra.iter().cloned().collect();
                let aug_m = &m + &rf.r / q0;
                if let Some(r) = min_over_u(inst, &aug_m, l, &extra) {
                    keep_min(&mut out.chi3, r.value, || Certificate { u: vec_of(&r.u), lambda: vec_of(l), v: Some(vec_of(v)), w: Some(vec_of(&w)), value: r.value });
                    out.quads.push(QuadrupleZ::new(inst, r.u.clone(), l.clone(), v.clone(), w.clone()));
                }
                self.rho_zero(&mut out, &m, l, v, &w, &rf);
            }
        }
        out
    }

    fn q_zero_stratum(&self, out: &mut VEval, m: &DMatrix<f64>, l: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>, rf: &RhoForm) {
        out.q_zero = true;
        self.rho_zero(out, m, l, v, w, rf);
    }

    /// χ₂ candidate: the form over `U(λ) ∩ {ρ(·, λ, v) = 0}`.
    fn rho_zero(&self, out: &mut VEval, m: &DMatrix<f64>, l: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>, rf: &RhoForm) {
        let inst = self.inst;
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let dom = match &rf.extra {
            Some(b) if b.norm() > 1e-12 => {
                rows.push(b.clone());
                linalg::null_space(&DMatrix::from_row_slice(1, inst.n, b.as_slice()), 1e-12)
            }
            _ => DMatrix::identity(inst.n, inst.n),
        };
        let rd = linalg::symmetrize(&(dom.transpose() * &rf.r * &dom));
        if rd.nrows() > 0 {
            let sym = nalgebra::SymmetricEigen::new(rd);
            let cut = 1e-9 * sym.eigenvalues.amax().max(1.0);
            for i in 0..sym.eigenvalues.len() {
                if sym.eigenvalues[i] > cut {
                    rows.push(&dom * sym.eigenvectors.column(i));
                }
            }
        }
        if let Some(r) = min_over_u(inst, m, l, &rows) {
            keep_min(&mut out.chi2, r.value, || Certificate { u: vec_of(&r.u), lambda: vec_of(l), v: Some(vec_of(v)), w: Some(vec_of(w)), value: r.value });
            out.quads.push(QuadrupleZ::new(inst, r.u.clone(), l.clone(), v.clone(), w.clone()));
        }
    }
}

/// Some `w` with `½∇²g(v,v) + ∇g(x̄)w ∈ Q`, found by maximizing the depth inside `Q`.
fn nonzero_q_point(jac: &DMatrix<f64>, half: &DVector<f64>) -> Option<DVector<f64>> {
    use crate::barrier::{self, BarrierOpts, SocBlock};
    let (s, n) = jac.shape();
    let mut g = DMatrix::zeros(s, n + 1);
    g.columns_mut(0, n).copy_from(jac);
    g[(0, n)] = -1.0;
    let cone = SocBlock::new(g, half.clone());
    let radius = 1e3 * (1.0 + half.norm());
    let ball = SocBlock::ball(n + 1, n, radius);
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = -(half.norm() + 1.0);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let x = barrier::maximize(&c, &[cone, ball], x0, BarrierOpts { gap: 1e-12, target: Some(1e-6), ..Default::default() });
    let w = x.rows(0, n).into_owned();
    let q = half + jac * &w;
    let depth = q[0] - q.rows(1, s - 1).norm();
    (depth >= -1e-9 * (1.0 + half.norm())).then_some(w)
}

pub fn kernel_scan(inst: &Instance, opts: &AnalyzerOpts) -> KernelScan {
    let ctx = Ctx::new(inst, opts);
    let p = ctx.kernel.ncols();
    let mut scan = KernelScan {
        chi1: ChiEntry::infinite(),
        chi2: ChiEntry::infinite(),
        chi3: ChiEntry::infinite(),
        simplified: None,
        quadruples: Vec::new(),
        q_zero_dirs: Vec::new(),
        unbounded_at: None,
        heuristic: false,
        evaluations: 0,
        kernel_dim: p,
    };
    if p == 0 {
        return scan;
    }
    let mut h = opts.grid_h;
    let mut grid = sphere_grid(p, h, opts.max_grid);
    while grid.is_empty() {
        h *= 2.0;
        scan.heuristic = true;
        grid = sphere_grid(p, h, opts.max_grid);
    }
    let mut ys: Vec<DVector<f64>> = grid.into_iter().map(DVector::from_vec).collect();
    let n_grid = ys.len();
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);
    for _ in 0..opts.budget {
        ys.push(random_unit(&mut rng, p));
    }
    // Best grid point per objective: chi1, chi2, chi3, simplified.
    let mut seeds: [Option<(f64, DVector<f64>)>; 4] = [None, None, None, None];
    let absorb = |scan: &mut KernelScan, y: &DVector<f64>, e: VEval, seeds: Option<&mut [Option<(f64, DVector<f64>)>; 4]>| {
        scan.evaluations += 1;
        let v = &ctx.kernel * y;
        if e.unbounded {
            scan.unbounded_at.get_or_insert(v.clone());
        }
        if e.sampled {
            scan.heuristic = true;
        }
        if e.q_zero {
            scan.q_zero_dirs.push(v.clone());
        }
        let vals = [
            e.chi1.as_ref().map(|c| c.0),
            e.chi2.as_ref().map(|c| c.0),
            e.chi3.as_ref().map(|c| c.0),
            e.simplified.as_ref().map(|c| c.0),
        ];
        if let Some(seeds) = seeds {
            for (k, val) in vals.iter().enumerate() {
                if let Some(val) = val {
                    if seeds[k].as_ref().map_or(true, |s| *val < s.0) {
                        seeds[k] = Some((*val, y.clone()));
                    }
                }
            }
        }
        if let Some((val, c)) = e.chi1 {
            scan.chi1.offer(val, || c);
        }
        if let Some((val, c)) = e.chi2 {
            scan.chi2.offer(val, || c);
        }
        if let Some((val, c)) = e.chi3 {
            scan.chi3.offer(val, || c);
        }
        if let Some(s) = e.simplified {
            if scan.simplified.as_ref().map_or(true, |b| s.0 < b.0) {
                scan.simplified = Some(s);
            }
        }
        if scan.quadruples.len() < 10_000 {
            scan.quadruples.extend(e.quads);
        }
        vals
    };
    for (i, y) in ys.iter().enumerate() {
        let e = ctx.eval(&(&ctx.kernel * y));
        let seeds_ref = (i < n_grid).then_some(&mut seeds);
        absorb(&mut scan, y, e, seeds_ref);
    }
    // Local pattern search on the sphere from the best grid point of each objective.
    if p >= 2 {
        for (k, seed) in seeds.iter().enumerate() {
            let Some((mut best, mut y)) = seed.clone() else { continue };
            let mut step = h / 2.0;
            while step > 1e-7 {
                let tangent = linalg::null_space(&DMatrix::from_row_slice(1, p, y.as_slice()), 1e-12);
                let mut improved = false;
                for j in 0..tangent.ncols() {
                    for s in [1.0, -1.0] {
                        let mut cand = &y + tangent.column(j) * (s * step);
                        cand /= cand.norm();
                        let e = ctx.eval(&(&ctx.kernel * &cand));
                        let vals = absorb(&mut scan, &cand, e, None);
                        if let Some(val) = vals[k] {
                            if val < best - 1e-15 {
                                best = val;
                                y = cand;
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
        }
    }
    scan
}

pub fn chi1(inst: &Instance, opts: &AnalyzerOpts) -> Result<ChiEntry, variational::VarError> {
    let scan = kernel_scan(inst, opts);
    if scan.unbounded_at.is_some() {
        return Err(variational::VarError::UnboundedMultiplierSet);
    }
    Ok(scan.chi1)
}

pub fn z_search(inst: &Instance, opts: &AnalyzerOpts) -> Vec<QuadrupleZ> {
    kernel_scan(inst, opts).quadruples
}

pub fn chi2_chi3(inst: &Instance, opts: &AnalyzerOpts) -> (ChiEntry, ChiEntry) {
    let scan = kernel_scan(inst, opts);
    (scan.chi2, scan.chi3)
}

pub fn simplified_check(inst: &Instance, kappa: Option<f64>, opts: &AnalyzerOpts) -> SimplifiedOutcome {
    match classify_case(inst) {
        Case::OutOfKernel(u) => simplified_out_kernel(inst, &u, kappa, opts),
        Case::InKernel => simplified_from_scan(inst, &kernel_scan(inst, opts), kappa),
    }
}

fn simplified_from_scan(inst: &Instance, scan: &KernelScan, kappa: Option<f64>) -> SimplifiedOutcome {
    let thr = kappa.map_or(inst.tol.margin, |k| 1.0 / k);
    match &scan.simplified {
        Some((v, u, l)) if *v <= thr => SimplifiedOutcome::Fails { u: vec_of(u), lambda: vec_of(l), value: *v },
        Some((v, _, _)) => SimplifiedOutcome::Passes { margin: *v },
        None => SimplifiedOutcome::Passes { margin: f64::INFINITY },
    }
}

pub fn in_kernel_verdict(inst: &Instance, opts: &AnalyzerOpts) -> AnalysisVerdict {
    let scan = kernel_scan(inst, opts);
    verdict_from_scan(inst, &scan)
}

pub fn verdict_from_scan(inst: &Instance, scan: &KernelScan) -> AnalysisVerdict {
    let margin = inst.tol.margin;
    let mut violated = None;
    for v in &scan.q_zero_dirs {
        if !variational::two_regular(inst, v) {
            violated = Some(v.clone());
            break;
        }
    }
    let two_regularity = match (violated, scan.q_zero_dirs.len()) {
        (Some(v), _) => TwoRegularity::Violated { v: vec_of(&v) },
        (None, 0) => TwoRegularity::NotApplicable,
        (None, k) => TwoRegularity::Sampled { directions: k },
    };
    let entries = [("chi1", &scan.chi1), ("chi2", &scan.chi2), ("chi3", &scan.chi3)];
    let (min_name, min_entry) = entries.iter().min_by(|a, b| a.1.value.total_cmp(&b.1.value)).copied().expect("three entries");
    let min_chi = min_entry.value;
    let verdict = if let Some(v) = &scan.unbounded_at {
        Verdict::Inconclusive { reason: format!("directional multiplier set is empty at v = {:?}", vec_of(v)) }
    } else if min_chi > margin {
        if min_chi.is_infinite() {
            Verdict::TiltStable { bound: 0.0, infimum_not_attained: true, heuristic: scan.heuristic }
        } else {
            Verdict::TiltStable { bound: 1.0 / min_chi, infimum_not_attained: false, heuristic: scan.heuristic }
        }
    } else if scan.chi1.value < -margin {
        // The first necessary condition holds without any 2-regularity hypothesis.
        Verdict::NotTiltStable {
            condition: "in-kernel necessary condition (a)".into(),
            witness: scan.chi1.certificate.clone().expect("finite minimum has a witness"),
        }
    } else if min_chi < -margin {
        if matches!(two_regularity, TwoRegularity::Violated { .. }) {
            Verdict::Inconclusive {
                reason: format!("{min_name} = {min_chi:.3e} is negative but 2-regularity fails at a q = 0 direction"),
            }
        } else {
            Verdict::NotTiltStable {
                condition: "in-kernel necessary condition (b)".into(),
                witness: min_entry.certificate.clone().expect("finite minimum has a witness"),
            }
        }
    } else {
        Verdict::Inconclusive { reason: format!("{min_name} = {min_chi:.3e} lies inside the margin band") }
    };
    AnalysisVerdict {
        case: CaseTag::InKernel,
        verdict,
        chi: ChiValues { chi1: Some(scan.chi1.clone()), chi2: Some(scan.chi2.clone()), chi3: Some(scan.chi3.clone()) },
        out_of_kernel_min: None,
        simplified_test: simplified_from_scan(inst, scan, None),
        two_regularity,
        diagnostics: vec![
            diag("min_chi", min_chi),
            diag("kernel_dim", scan.kernel_dim as f64),
            diag("evaluations", scan.evaluations as f64),
            diag("quadruples", scan.quadruples.len() as f64),
            diag("q_zero_directions", scan.q_zero_dirs.len() as f64),
        ],
    }
}
