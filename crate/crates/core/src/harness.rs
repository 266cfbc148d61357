//! Behavioral cross-checks: tilted localized solves, an empirical tilt modulus,
//! and sampling falsifiers for the neighborhood condition and for MSCQ.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extreal;
use crate::linalg;
use crate::poly::GBundle;
use crate::lorentz::{self, ConePoint, Stratum};
use crate::problem::Instance;
use crate::quadmin;
use crate::subsolver::{self, LpStatus};
use crate::variational;

/// Largest dimension for which the harness uses exhaustive grids.
pub const GRID_DIM_LIMIT: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("no feasible point found in the localization ball")]
    NoFeasiblePoint,
    #[error("projected gradient did not converge within {0} iterations")]
    NonConvergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Cone,
    Boundary,
    Vertex,
}

fn boundary_point(q: &DVector<f64>) -> DVector<f64> {
    let p = ConePoint::from_vec(q);
    let r = p.qr.norm();
    if r <= 1e-300 {
        return DVector::zeros(q.len());
    }
    let a = 0.5 * (p.q0 + r).max(0.0);
    ConePoint { q0: a, qr: &p.qr * (a / r) }.to_vec()
}

fn target_point(g: &DVector<f64>, target: Target) -> DVector<f64> {
    match target {
        Target::Cone => lorentz::project_vec(g),
        Target::Boundary => boundary_point(g),
        Target::Vertex => DVector::zeros(g.len()),
    }
}

/// Gauss–Newton on the violation `r = t(g(x)) - g(x)`, where `t` maps onto `Q`,
/// `bd Q` or `{0}`. Away from the vertex only the component of `r` along its own
/// direction is corrected, which keeps the step normal to the constraint surface.
fn restore(inst: &Instance, x: &DVector<f64>, target: Target) -> Option<DVector<f64>> {
    let mut x = x.clone();
    let viol = |x: &DVector<f64>| {
        let g = inst.g_value(x);
        (target_point(&g, target) - &g).norm()
    };
    for _ in 0..50 {
        let gb = inst.g_bundle(&x);
        let t = target_point(&gb.value, target);
        let r = &t - &gb.value;
        let rn = r.norm();
        if rn <= 1e-13 * (1.0 + gb.value.norm()) {
            return Some(x);
        }
        let a = gb.jac.transpose() * (&r / rn);
        let dx = if target == Target::Vertex || t.norm() <= 1e-14 || a.norm() <= 1e-12 {
            linalg::lstsq(&gb.jac, &r, 1e-12).0
        } else {
            &a * (rn / a.norm_squared())
        };
        let mut step = 1.0;
        while step > 1e-6 && viol(&(&x + &dx * step)) >= rn {
            step *= 0.5;
        }
        if step <= 1e-6 {
            break;
        }
        x += dx * step;
    }
    (viol(&x) <= 1e-10).then_some(x)
}

fn unit_cube_grid(n: usize, k: usize) -> Vec<DVector<f64>> {
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(n, |_, _| {
                let j = idx % k;
                idx /= k;
                if k == 1 {
                    0.0
                } else {
                    -1.0 + 2.0 * j as f64 / (k - 1) as f64
                }
            })
        })
        .collect()
}

fn grid_points_per_axis(n: usize) -> usize {
    match n {
        1 => 41,
        2 => 21,
        3 => 11,
        _ => 7,
    }
}

fn random_in_ball(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if y.norm() <= 1.0 {
            return y;
        }
    }
}

/// Localized minimization of `f - ⟨v*, ·⟩` over `Γ ∩ B_γ(x̄)`, with the
/// feasible seed grid computed once and shared across tilts.
pub struct TiltSolver<'a> {
    inst: &'a Instance,
    gamma: f64,
    seeds: Vec<DVector<f64>>,
    pub heuristic: bool,
}

impl<'a> TiltSolver<'a> {
    pub fn new(inst: &'a Instance, gamma: f64) -> Self {
        let n = inst.n;
        let xb = &inst.x_base;
        let heuristic = n > GRID_DIM_LIMIT;
        let raw: Vec<DVector<f64>> = if heuristic {
            let mut rng = ChaCha8Rng::seed_from_u64(inst.seed ^ 0x7117);
            (0..2000).map(|_| random_in_ball(&mut rng, n)).collect()
        } else {
            unit_cube_grid(n, grid_points_per_axis(n))
        };
        let mut seeds = vec![xb.clone()];
        for y in raw {
            if y.norm() > 1.0 {
                continue;
            }
            let x = xb + y * gamma;
            if let Some(x) = restore(inst, &x, Target::Cone) {
                if (&x - xb).norm() <= gamma {
                    seeds.push(x);
                }
            }
        }
        TiltSolver { inst, gamma, seeds, heuristic }
    }

    fn objective(&self, v_star: &DVector<f64>, x: &DVector<f64>) -> f64 {
        self.inst.f.eval(x) - v_star.dot(x)
    }

    pub fn solve(&self, v_star: &DVector<f64>) -> Result<DVector<f64>, HarnessError> {
        let mut ranked: Vec<(f64, &DVector<f64>)> = self.seeds.iter().map(|x| (self.objective(v_star, x), x)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut failure = None;
        for (_, x0) in ranked.iter().take(3) {
            match self.polish(v_star, (*x0).clone()) {
                Ok(x) => {
                    let val = self.objective(v_star, &x);
                    if best.as_ref().map_or(true, |b| val < b.0) {
                        best = Some((val, x));
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
        match (best, failure) {
            (Some((_, x)), _) => Ok(x),
            (None, Some(e)) => Err(e),
            (None, None) => Err(HarnessError::NoFeasiblePoint),
        }
    }

    /// Image of `x - α∇(f - ⟨v*,·⟩)` under restoration and the pull back into the ball.
    fn step(&self, v_star: &DVector<f64>, x: &DVector<f64>, alpha: f64) -> Option<DVector<f64>> {
        let inst = self.inst;
        let xb = &inst.x_base;
        let grad = inst.f.gradient(x) - v_star;
        let y = restore(inst, &(x - grad * alpha), Target::Cone)?;
        let d = (&y - xb).norm();
        if d <= self.gamma {
            return Some(y);
        }
        restore(inst, &(xb + (&y - xb) * (self.gamma / d)), Target::Cone).filter(|z| (z - xb).norm() <= self.gamma * (1.0 + 1e-9))
    }

    /// Projected gradient where the projection is feasibility restoration
    /// followed by a radial pull back into the ball. A line-search phase gets
    /// close; fixed reference steps then drive the fixed-point residual down,
    /// since objective differences stop resolving the iterate near the end.
    fn polish(&self, v_star: &DVector<f64>, mut x: DVector<f64>) -> Result<DVector<f64>, HarnessError> {
        let cap = 5000;
        let alpha0 = 1.0 / (1.0 + self.inst.f.hessian(&x).norm());
        let mut alpha = alpha0;
        let mut fx = self.objective(v_star, &x);
        for _ in 0..cap {
            match self.step(v_star, &x, alpha) {
                Some(y) if self.objective(v_star, &y) < fx - 1e-4 * (&y - &x).norm_squared() / alpha => {
                    fx = self.objective(v_star, &y);
                    x = y;
                    alpha = (alpha * 1.5).min(1e3 * alpha0);
                }
                _ => {
                    alpha *= 0.5;
                    if alpha < 1e-6 * alpha0 {
                        break;
                    }
                }
            }
        }
        if let Some(y) = self.newton_refine(v_star, &x) {
            return Ok(y);
        }
        let tol = 1e-13 * (1.0 + x.norm());
        let mut best = x.clone();
        let mut best_res = f64::INFINITY;
        for _ in 0..cap {
            let Some(y) = self.step(v_star, &x, alpha0) else { break };
            let res = (&y - &x).norm();
            if res < best_res {
                best_res = res;
                best = x.clone();
            }
            if res <= tol {
                return Ok(best);
            }
            x = y;
        }
        if best_res <= 1e-9 * (1.0 + best.norm()) {
            Ok(best)
        } else {
            Err(HarnessError::NonConvergence(cap))
        }
    }

    /// Newton on the KKT system of the stratum containing `x`: unconstrained in
    /// the interior, one smooth constraint `‖g_r‖ - g₀ = 0` on the boundary.
    /// Accepted only when the result is feasible, stationary and no worse.
    fn newton_refine(&self, v_star: &DVector<f64>, x0: &DVector<f64>) -> Option<DVector<f64>> {
        let inst = self.inst;
        let n = inst.n;
        let tol = inst.tol.cone_tol();
        let stratum = ConePoint::from_vec(&inst.g_value(x0)).classify(&tol);
        let mut x = x0.clone();
        let mut mu = 0.0;
        let mut kkt_res = f64::INFINITY;
        for _ in 0..40 {
            let grad = inst.f.gradient(&x) - v_star;
            let hess = inst.f.hessian(&x);
            let (step, res) = match stratum {
                Stratum::Interior => {
                    let (dx, _) = linalg::lstsq(&hess, &(-&grad), 1e-14);
                    (dx, grad.norm())
                }
                Stratum::BoundaryNonzero => {
                    let gb = inst.g_bundle(&x);
                    let s = gb.value.len();
                    let gr = gb.value.rows(1, s - 1).into_owned();
                    let rn = gr.norm();
                    if rn <= 1e-14 {
                        return None;
                    }
                    let e = &gr / rn;
                    let jr = gb.jac.rows(1, s - 1).into_owned();
                    let c = rn - gb.value[0];
                    let dc = jr.transpose() * &e - gb.jac.row(0).transpose();
                    let mut d2c = -&gb.hess[0] + jr.transpose() * (DMatrix::identity(s - 1, s - 1) - &e * e.transpose()) * &jr / rn;
                    for i in 1..s {
                        d2c += &gb.hess[i] * e[i - 1];
                    }
                    let mut kkt = DMatrix::zeros(n + 1, n + 1);
                    kkt.view_mut((0, 0), (n, n)).copy_from(&(&hess + d2c * mu));
                    kkt.view_mut((0, n), (n, 1)).copy_from(&dc);
                    kkt.view_mut((n, 0), (1, n)).copy_from(&dc.transpose());
                    let mut rhs = DVector::zeros(n + 1);
                    rhs.rows_mut(0, n).copy_from(&(-(&grad + &dc * mu)));
                    rhs[n] = -c;
                    let res = rhs.norm();
                    let (sol, _) = linalg::lstsq(&kkt, &rhs, 1e-14);
                    mu += sol[n];
                    (sol.rows(0, n).into_owned(), res)
                }
                _ => return vertex_kkt(inst, v_star, x0).then(|| x0.clone()),
            };
            kkt_res = res;
            if res <= 1e-13 * (1.0 + grad.norm()) {
                break;
            }
            x += step;
        }
        if kkt_res > 1e-10 || mu < -1e-12 {
            return None;
        }
        let y = restore(inst, &x, Target::Cone)?;
        let ok_ball = (&y - &inst.x_base).norm() <= self.gamma;
        let ok_stratum = ConePoint::from_vec(&inst.g_value(&y)).classify(&tol) == stratum;
        let no_worse = self.objective(v_star, &y) <= self.objective(v_star, x0) + 1e-12 * (1.0 + self.objective(v_star, x0).abs());
        (ok_ball && ok_stratum && no_worse).then_some(y)
    }
}

/// Stationarity at a point with `g(x) = 0`: some `λ ∈ Q` with `Jᵀλ = ∇f - v*`,
/// found by accelerated projected gradient on the residual.
fn vertex_kkt(inst: &Instance, v_star: &DVector<f64>, x: &DVector<f64>) -> bool {
    let gb = inst.g_bundle(x);
    if gb.value.norm() > inst.tol.cone {
        return false;
    }
    let grad = inst.f.gradient(x) - v_star;
    let jt = gb.jac.transpose();
    let lip = (&gb.jac * &jt).norm().max(1e-300);
    let mut lam = DVector::zeros(gb.value.len());
    let mut y = lam.clone();
    let mut t = 1.0f64;
    for _ in 0..5000 {
        let r = &jt * &y - &grad;
        let next = lorentz::project_vec(&(&y - &gb.jac * r / lip));
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &lam) * ((t - 1.0) / tn);
        lam = next;
        t = tn;
    }
    (&jt * &lam - &grad).norm() <= 1e-8 * (1.0 + grad.norm())
}

pub fn solve_tilted(inst: &Instance, v_star: &DVector<f64>, gamma: f64) -> Result<DVector<f64>, HarnessError> {
    TiltSolver::new(inst, gamma).solve(v_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltExperiment {
    pub gamma: f64,
    pub r_tilt: f64,
    pub tilt_grid: Vec<Vec<f64>>,
    /// `None` where the tilted solve did not converge.
    pub solutions: Vec<Option<Vec<f64>>>,
    #[serde(with = "extreal")]
    pub modulus_estimate: f64,
    pub unstable: bool,
    /// `x(0)` agrees with the base point within `1e-6`.
    pub base_is_minimizer: bool,
    pub degraded: bool,
    pub heuristic: bool,
    pub kappa_theory: Option<f64>,
}

/// Axis and diagonal directions scaled over `grid_size` points of `[-r, r]`, zero once.
pub fn tilt_grid(n: usize, r_tilt: f64, grid_size: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        dirs.push(DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            for sign in [1.0, -1.0] {
                dirs.push(DVector::from_fn(n, |k, _| if k == i { s } else if k == j { sign * s } else { 0.0 }));
            }
        }
    }
    let mut out = vec![DVector::zeros(n)];
    if grid_size < 2 {
        return out;
    }
    for d in &dirs {
        for k in 0..grid_size {
            let t = r_tilt * (-1.0 + 2.0 * k as f64 / (grid_size - 1) as f64);
            if t.abs() > 1e-15 * r_tilt {
                out.push(d * t);
            }
        }
    }
    out
}

pub fn empirical_tilt(inst: &Instance, gamma: f64, r_tilt: f64, grid_size: usize, kappa_theory: Option<f64>) -> TiltExperiment {
    let solver = TiltSolver::new(inst, gamma);
    let grid = tilt_grid(inst.n, r_tilt, grid_size);
    let mut solutions = Vec::with_capacity(grid.len());
    let mut degraded = false;
    for v in &grid {
        match solver.solve(v) {
            Ok(x) => solutions.push(x),
            Err(_) => {
                degraded = true;
                solutions.push(DVector::from_element(inst.n, f64::NAN));
            }
        }
    }
    let base_is_minimizer = (&solutions[0] - &inst.x_base).norm() <= 1e-6;
    let mut modulus: f64 = 0.0;
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            let dv = (&grid[i] - &grid[j]).norm();
            let dx = (&solutions[i] - &solutions[j]).norm();
            if dx.is_finite() {
                modulus = modulus.max(dx / dv);
            }
        }
    }
    if !base_is_minimizer {
        modulus = f64::INFINITY;
    }
    TiltExperiment {
        gamma,
        r_tilt,
        tilt_grid: grid.iter().map(|v| v.iter().cloned().collect()).collect(),
        solutions: solutions.iter().map(|v| v.iter().all(|t| t.is_finite()).then(|| v.iter().cloned().collect())).collect(),
        modulus_estimate: modulus,
        unstable: modulus > 1e3,
        base_is_minimizer,
        degraded,
        heuristic: solver.heuristic,
        kappa_theory,
    }
}

// Neighborhood falsifier ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodWitness {
    pub x: Vec<f64>,
    pub x_star: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub value: f64,
    pub stratum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodReport {
    pub witness: Option<NeighborhoodWitness>,
    /// Smallest form value seen over valid samples.
    #[serde(with = "extreal")]
    pub min_value: f64,
    pub valid_samples: usize,
    pub samples: usize,
}

struct Sampler<'a> {
    inst: &'a Instance,
    base_lambdas: Vec<DVector<f64>>,
}

struct Tuple {
    u: DVector<f64>,
    lambda: DVector<f64>,
    value: f64,
}

impl<'a> Sampler<'a> {
    fn new(inst: &'a Instance) -> Self {
        let slice = variational::lambda0_set(inst);
        let mut base_lambdas = Vec::new();
        if let Some(l) = subsolver::feasibility(&slice) {
            base_lambdas.push(l);
        }
        if let Some(l) = subsolver::maximize_linear(&slice, &DVector::zeros(1 + inst.m), None).argmax {
            base_lambdas.push(l);
        }
        let bound = 2.0 * (slice.offset.norm() + 1.0);
        for j in 0..slice.dim() {
            for s in [1.0, -1.0] {
                let d = slice.basis.column(j) * s;
                let r = subsolver::maximize_linear(&slice, &d, Some(bound));
                if let (LpStatus::Optimal, Some(l)) = (r.status, r.argmax) {
                    base_lambdas.push(l);
                }
            }
        }
        if base_lambdas.is_empty() {
            base_lambdas.push(DVector::zeros(1 + inst.m));
        }
        Sampler { inst, base_lambdas }
    }

    fn form(&self, x: &DVector<f64>, lambda: &DVector<f64>, gb: &GBundle) -> Option<DMatrix<f64>> {
        let h = variational::curvature_h(lambda, gb, &self.inst.tol.cone_tol()).ok()?;
        Some(self.inst.f.hessian(x) + gb.weighted_hessian(lambda) + h)
    }

    fn sigma_ok(&self, lambda: &DVector<f64>, rhs: &DVector<f64>) -> bool {
        lambda.norm() <= self.inst.sigma * rhs.norm() * (1.0 + 1e-9) + 1e-12
    }

    /// One sample: returns the stratum name, `x`, `x*` and the smallest form value found.
    fn sample(&self, i: usize, eta: f64, rng: &mut ChaCha8Rng) -> Option<(&'static str, DVector<f64>, DVector<f64>, Tuple)> {
        let inst = self.inst;
        let n = inst.n;
        let xb = &inst.x_base;
        let scale = 10f64.powf(-3.0 * rng.gen::<f64>());
        let x0 = xb + random_in_ball(rng, n) * (eta * scale);
        let target = match i % 3 {
            0 => Target::Vertex,
            1 => Target::Boundary,
            _ => Target::Cone,
        };
        let x = if i == 0 { xb.clone() } else { restore(inst, &x0, target)? };
        if (&x - xb).norm() > eta {
            return None;
        }
        let gb = inst.g_bundle(&x);
        let fgrad = inst.f.gradient(&x);
        let q = ConePoint::from_vec(&gb.value);
        let tol = inst.tol.cone_tol();
        let base = &self.base_lambdas[rng.gen_range(0..self.base_lambdas.len())];
        let stratum = q.classify(&tol);
        if i != 0 && !credible(&gb, &x, xb, stratum) {
            return None;
        }
        match stratum {
            Stratum::Outside => None,
            Stratum::Interior => {
                let xs = fgrad.clone();
                if xs.norm() > eta {
                    return None;
                }
                let m = inst.f.hessian(&x);
                let (value, u) = linalg::min_eig(&m);
                Some(("interior", x, xs, Tuple { u, lambda: DVector::zeros(1 + inst.m), value }))
            }
            Stratum::BoundaryNonzero => {
                let hat = q.hat().to_vec();
                let hat = &hat / hat.norm();
                let a = gb.jac.transpose() * &hat;
                if a.norm() <= 1e-10 {
                    return None;
                }
                let t_fit = (-fgrad.dot(&a) / a.norm_squared()).max(0.0);
                let t = (t_fit * (1.0 + 0.1 * eta * rng.gen_range(-1.0..1.0))).max(0.0);
                let lambda = &hat * t;
                let xs = &fgrad + &a * t;
                if xs.norm() > eta {
                    return None;
                }
                let rhs = &xs - &fgrad;
                if !self.sigma_ok(&lambda, &rhs) {
                    return None;
                }
                let m = self.form(&x, &lambda, &gb)?;
                let rows = if t > 0.0 { vec![a] } else { vec![] };
                let r = quadmin::minimize(&m, &rows, None)?;
                Some(("boundary", x, xs, Tuple { u: r.u, lambda, value: r.value }))
            }
            Stratum::Zero => {
                let delta = DVector::from_fn(1 + inst.m, |_, _| rng.gen_range(-1.0..1.0)) * (eta * scale * (1.0 + base.norm()));
                let lam0 = -lorentz::project_vec(&(-(base + delta)));
                let xs = &fgrad + gb.jac.transpose() * &lam0;
                if xs.norm() > eta {
                    return None;
                }
                let rhs = &xs - &fgrad;
                let slice = subsolver::build_slice(&gb.jac, &rhs, inst.tol.rank);
                let dirs = self.vertex_directions(&gb.jac, &lam0, rng);
                let mut best: Option<Tuple> = None;
                for u in dirs {
                    let d = gb.second_order_action(&u, &u);
                    let lam = if slice.dim() == 0 {
                        lam0.clone()
                    } else {
                        let r = subsolver::maximize_linear(&slice, &d, None);
                        match (r.status, r.argmax) {
                            (LpStatus::Optimal, Some(l)) => l,
                            _ => continue,
                        }
                    };
                    if !self.sigma_ok(&lam, &rhs) {
                        continue;
                    }
                    let m = inst.f.hessian(&x) + gb.weighted_hessian(&lam);
                    let value = u.dot(&(&m * &u));
                    if best.as_ref().map_or(true, |b| value < b.value) {
                        best = Some(Tuple { u, lambda: lam, value });
                    }
                }
                best.map(|b| ("vertex", x, xs, b))
            }
        }
    }

    /// Unit critical directions at a vertex point, where `λ` is one multiplier.
    fn vertex_directions(&self, jac: &DMatrix<f64>, lambda: &DVector<f64>, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let n = jac.ncols();
        let ker = linalg::null_space(jac, self.inst.tol.rank);
        let depth = subsolver::dual_depth(lambda);
        let scale = lambda.norm().max(1.0);
        let mut gens: Vec<DVector<f64>> = (0..ker.ncols()).map(|j| ker.column(j).into_owned()).collect();
        let mut half_dir = None;
        if depth <= 1e-8 * scale && lambda.norm() > 1e-10 {
            let hat = ConePoint::from_vec(lambda).hat().to_vec();
            let (u0, res) = linalg::lstsq(jac, &(&hat / hat.norm()), self.inst.tol.rank);
            if res <= 1e-8 && u0.norm() > 1e-12 {
                half_dir = Some(u0.clone());
                gens.push(u0);
            }
        }
        let mut out = Vec::new();
        if lambda.norm() <= 1e-10 {
            // Λ contains 0: every tangent direction is critical.
            for _ in 0..64 {
                let u = random_in_ball(rng, n);
                let ju = ConePoint::from_vec(&(jac * &u));
                if u.norm() > 1e-3 && lorentz::cone_contains(&ju, 1e-12) {
                    out.push(&u / u.norm());
                }
                if out.len() >= 3 {
                    break;
                }
            }
        }
        if !gens.is_empty() {
            let b = DMatrix::from_columns(&gens);
            for _ in 0..3 {
                let mut c: DVector<f64> = DVector::from_fn(gens.len(), |_, _| rng.gen_range(-1.0..1.0));
                if half_dir.is_some() {
                    let k = gens.len() - 1;
                    c[k] = c[k].abs();
                }
                let u = &b * c;
                if u.norm() > 1e-9 {
                    out.push(&u / u.norm());
                }
            }
            out.push(gens[0].normalize());
        }
        out
    }
}

/// Rejects restored points whose stratum is a tolerance artifact: near the
/// base point `‖g(x)‖` can be as small as the absolute tolerances, so the
/// violation must be small relative to `‖g(x)‖` (nonzero strata) or to
/// `‖∇g(x)‖‖x - x̄‖` (vertex stratum).
fn credible(gb: &GBundle, x: &DVector<f64>, xb: &DVector<f64>, stratum: Stratum) -> bool {
    const REL: f64 = 1e-6;
    match stratum {
        Stratum::Outside => false,
        Stratum::Zero => gb.value.norm() <= REL * gb.jac.norm() * (x - xb).norm(),
        _ => lorentz::dist_to_cone(&gb.value) <= REL * gb.value.norm(),
    }
}

pub fn neighborhood_falsify(inst: &Instance, kappa: f64, eta: f64, samples: usize, seed: u64) -> NeighborhoodReport {
    let sampler = Sampler::new(inst);
    let thr = 1.0 / kappa;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = NeighborhoodReport { witness: None, min_value: f64::INFINITY, valid_samples: 0, samples };
    for i in 0..samples {
        let Some((stratum, x, xs, t)) = sampler.sample(i, eta, &mut rng) else { continue };
        report.valid_samples += 1;
        report.min_value = report.min_value.min(t.value);
        if t.value < thr && report.witness.is_none() {
            report.witness = Some(NeighborhoodWitness {
                x: x.iter().cloned().collect(),
                x_star: xs.iter().cloned().collect(),
                u: t.u.iter().cloned().collect(),
                lambda: t.lambda.iter().cloned().collect(),
                value: t.value,
                stratum: stratum.to_string(),
            });
        }
    }
    report
}

/// Smallest sampled form value on each neighborhood radius of a ladder.
pub fn neighborhood_profile(inst: &Instance, etas: &[f64], samples: usize, seed: u64) -> Vec<(f64, f64)> {
    etas.iter().map(|&eta| (eta, neighborhood_falsify(inst, f64::INFINITY, eta, samples, seed).min_value)).collect()
}

// MSCQ falsifier ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscqWitness {
    pub x: Vec<f64>,
    /// `dist(g(x); Q)`.
    pub dist_g: f64,
    /// Certified lower bound on `dist(x; Γ)`.
    pub dist_lower: f64,
    pub dist_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscqReport {
    pub witness: Option<MscqWitness>,
    pub samples: usize,
    pub candidates: usize,
    pub heuristic: bool,
}

/// Lower bound on `dist(x; Γ)` from a grid of `[-R, R]^n` around `x`: cells where
/// `dist(g(·); Q)` exceeds a Lipschitz bound times the covering radius hold no feasible point.
pub fn certified_distance_lower(inst: &Instance, x: &DVector<f64>, radius: f64) -> f64 {
    let n = inst.n;
    let k = match n {
        1 => 2001,
        2 => 201,
        3 => 41,
        _ => 15,
    };
    let grid = unit_cube_grid(n, k);
    let h = 2.0 * radius / (k - 1) as f64;
    let cover = 0.5 * h * (n as f64).sqrt();
    let mut pts = Vec::with_capacity(grid.len());
    let mut lip: f64 = 0.0;
    let mut curv: f64 = 0.0;
    for c in grid {
        let y = x + c * radius;
        let gb = inst.g_bundle(&y);
        lip = lip.max(gb.jac.norm());
        curv = curv.max(gb.hess.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt());
        pts.push((lorentz::dist_to_cone(&gb.value), (&y - x).norm()));
    }
    let l = lip + 2.0 * cover * curv;
    let mut lower = radius;
    for (delta, dist) in pts {
        if delta <= l * cover {
            lower = lower.min((dist - cover).max(0.0));
        }
    }
    lower
}

pub fn mscq_falsify(inst: &Instance, samples: usize, seed: u64) -> MscqReport {
    let n = inst.n;
    let heuristic = n > GRID_DIM_LIMIT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MscqReport { witness: None, samples, candidates: 0, heuristic };
    let mut certified = 0;
    for _ in 0..samples {
        let r = 0.1 * 10f64.powf(-2.0 * rng.gen::<f64>());
        let x = &inst.x_base + random_in_ball(&mut rng, n) * r;
        let dist_g = lorentz::dist_to_cone(&inst.g_value(&x));
        if dist_g <= 1e-14 {
            continue;
        }
        let upper = restore(inst, &x, Target::Cone).map_or(f64::INFINITY, |y| (y - &x).norm());
        if upper <= inst.sigma * dist_g * (1.0 + 1e-9) {
            continue;
        }
        report.candidates += 1;
        if heuristic || certified >= 50 || report.witness.is_some() {
            continue;
        }
        certified += 1;
        let radius = if upper.is_finite() { upper } else { r };
        let lower = certified_distance_lower(inst, &x, radius);
        if lower > inst.sigma * dist_g * (1.0 + 1e-6) {
            report.witness = Some(MscqWitness { x: x.iter().cloned().collect(), dist_g, dist_lower: lower, dist_upper: upper });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    // Closed-form tilted minimizer for f = ½‖x‖² + ⟨a, x⟩ over Q: proj_Q(v* - a).
    fn kkt_oracle(v: &DVector<f64>) -> DVector<f64> {
        let a = DVector::from_column_slice(&[1.0, -1.0, 0.0]);
        lorentz::project_vec(&(v - a))
    }

    #[test]
    fn tilted_solve_matches_projection() {
        let inst = catalog::out_of_kernel();
        let solver = TiltSolver::new(&inst, 0.1);
        for v in [[0.0, 0.0, 0.0], [1e-3, 2e-3, -1e-3], [-1e-3, 0.0, 5e-4], [0.02, 0.01, 0.0]] {
            let v = DVector::from_column_slice(&v);
            let x = solver.solve(&v).unwrap();
            assert!((&x - kkt_oracle(&v)).norm() < 1e-8, "{x} vs {}", kkt_oracle(&v));
        }
    }

    #[test]
    fn zero_grid_has_zero_modulus() {
        let e = empirical_tilt(&catalog::out_of_kernel(), 0.1, 1e-3, 1, None);
        assert_eq!(e.modulus_estimate, 0.0);
        assert!(e.base_is_minimizer);
    }

    #[test]
    fn unstable_instance_is_flagged() {
        let e = empirical_tilt(&catalog::out_of_kernel_unstable(), 0.1, 1e-3, 11, None);
        assert!(e.unstable, "{}", e.modulus_estimate);
    }

    #[test]
    fn neighborhood_on_stable_and_unstable() {
        let good = neighborhood_falsify(&catalog::out_of_kernel(), 2.0, 1e-2, 2000, 7);
        assert!(good.witness.is_none(), "{:?}", good.witness);
        assert!(good.valid_samples > 100);
        let bad = neighborhood_falsify(&catalog::out_of_kernel_unstable(), 1.0, 1e-2, 2000, 7);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn mscq_identity_and_squared() {
        assert!(mscq_falsify(&catalog::out_of_kernel(), 2000, 3).witness.is_none());
        let w = mscq_falsify(&catalog::squared_vertex(), 2000, 3).witness.expect("witness");
        // dist(x; Γ) = |x| and dist(g(x); Q) = x².
        assert!((w.dist_g - w.x[0] * w.x[0]).abs() < 1e-12);
        assert!(w.dist_lower <= w.x[0].abs() + 1e-12);
    }
}
