//! Linear optimization over affine slices of the dual cone `Q*`, the primitive
//! behind multiplier sets, directional multipliers and the out-of-kernel probe.
//!
//! A slice `{λ ∈ Q* : Jᵀλ = c}` is stored as `λ̂ + Nξ` with `λ̂` the minimum-norm
//! solution and `N` an orthonormal basis of `ker Jᵀ`, so `‖λ‖² = ‖λ̂‖² + ‖ξ‖²`.
//! When the slice meets `int Q*` the problem is solved by barrier path following
//! and polished on the boundary; otherwise the intersection lies in a single
//! boundary ray of `Q*` and is computed directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierOpts, SocBlock};
use crate::linalg;
use crate::lorentz::{dual_contains, ConePoint};
use crate::problem::Instance;

#[derive(Debug, Clone)]
pub struct MultiplierSlice {
    pub offset: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub empty: bool,
    pub residual: f64,
}

impl MultiplierSlice {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.basis * xi
    }

    pub fn coords(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * lambda
    }

    fn scale(&self) -> f64 {
        self.offset.norm().max(1.0)
    }

    /// `{0}` in `R^{1+m}`.
    pub fn origin(s: usize) -> Self {
        MultiplierSlice { offset: DVector::zeros(s), basis: DMatrix::zeros(s, 0), empty: false, residual: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Where the maximizer sits inside `Q*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveFace {
    Vertex,
    Interior,
    BoundaryRay,
}

#[derive(Debug, Clone)]
pub struct ConeLpResult {
    pub status: LpStatus,
    pub value: f64,
    pub argmax: Option<DVector<f64>>,
    pub active: Option<ActiveFace>,
    /// The objective is constant on the slice, so every feasible point is optimal.
    pub whole_slice: bool,
}

impl ConeLpResult {
    fn infeasible() -> Self {
        ConeLpResult { status: LpStatus::Infeasible, value: f64::NEG_INFINITY, argmax: None, active: None, whole_slice: false }
    }

    fn unbounded() -> Self {
        ConeLpResult { status: LpStatus::Unbounded, value: f64::INFINITY, argmax: None, active: None, whole_slice: false }
    }

    fn optimal(lambda: DVector<f64>, d: &DVector<f64>, whole_slice: bool) -> Self {
        let value = d.dot(&lambda);
        let active = Some(face_of(&lambda));
        ConeLpResult { status: LpStatus::Optimal, value, argmax: Some(lambda), active, whole_slice }
    }
}

/// Depth of `λ` inside `Q*`: `-λ0 - ‖λr‖` (nonnegative iff `λ ∈ Q*`).
pub fn dual_depth(lambda: &DVector<f64>) -> f64 {
    -lambda[0] - lambda.rows(1, lambda.len() - 1).norm()
}

pub fn face_of(lambda: &DVector<f64>) -> ActiveFace {
    let n = lambda.norm();
    if n <= 1e-9 {
        ActiveFace::Vertex
    } else if dual_depth(lambda) > 1e-9 * (1.0 + n) {
        ActiveFace::Interior
    } else {
        ActiveFace::BoundaryRay
    }
}

const FEAS_REL: f64 = 1e-9;

/// Affine description of `{λ : Jᵀλ = c}` with `J` the `(1+m) × n` Jacobian.
pub fn build_slice(j: &DMatrix<f64>, c: &DVector<f64>, tol_rank: f64) -> MultiplierSlice {
    let jt = j.transpose();
    let (offset, residual) = linalg::lstsq(&jt, c, tol_rank);
    let basis = linalg::null_space(&jt, tol_rank);
    let empty = residual > 1e-9 * (1.0 + c.norm());
    MultiplierSlice { offset, basis, empty, residual }
}

/// Result of the depth problem `max τ` s.t. `λ + τ e0 ∈ Q*` over the slice within a ball.
struct Depth {
    xi: DVector<f64>,
    tau: f64,
}

fn soc_block(slice: &MultiplierSlice, extra: usize) -> SocBlock {
    // -(λ̂ + Nξ) ∈ Q
    let s = slice.offset.len();
    let k = slice.dim();
    let mut g = DMatrix::zeros(s, k + extra);
    g.columns_mut(0, k).copy_from(&(-&slice.basis));
    SocBlock::new(g, -&slice.offset)
}

fn max_depth(slice: &MultiplierSlice, radius: f64) -> Depth {
    let k = slice.dim();
    let mut block = soc_block(slice, 1);
    // -(λ + τ e0) ∈ Q  ⇔  column for τ is +e0 on the negated axis component.
    block.g[(0, k)] = -1.0;
    let ball = SocBlock::ball(k + 1, k, radius);
    let mut x0 = DVector::zeros(k + 1);
    x0[k] = dual_depth(&slice.offset) - 1.0;
    let mut c = DVector::zeros(k + 1);
    c[k] = 1.0;
    let target = 1e-3 * slice.scale();
    let opts = BarrierOpts { gap: 1e-13, target: Some(target), ..Default::default() };
    let x = barrier::maximize(&c, &[block, ball], x0, opts);
    let xi = x.rows(0, k).into_owned();
    let tau = dual_depth(&slice.point(&xi));
    Depth { xi, tau }
}

fn phase1_radius(slice: &MultiplierSlice) -> f64 {
    1e4 * slice.scale()
}

/// Classification of the feasible region of a slice.
enum Region {
    Infeasible,
    /// A strictly feasible point in slice coordinates.
    Interior(DVector<f64>),
    /// The region lies in one boundary ray; the point is an approximate member.
    Thin(DVector<f64>),
}

fn region(slice: &MultiplierSlice, radius: f64) -> Region {
    let d = max_depth(slice, radius);
    let tol = FEAS_REL * slice.scale();
    if d.tau > tol {
        Region::Interior(d.xi)
    } else if d.tau < -10.0 * tol * (1.0 + d.xi.norm()) {
        Region::Infeasible
    } else {
        Region::Thin(d.xi)
    }
}

/// Feasible set when it lies inside a boundary ray of `Q*`: either a single point
/// or, for slices through the origin, the ray segment `{αρ : 0 ≤ α ≤ r}`.
enum ThinSet {
    Empty,
    Point(DVector<f64>),
    Segment { dir: DVector<f64>, len: f64 },
}

fn thin_set(slice: &MultiplierSlice, approx_xi: &DVector<f64>, radius: f64) -> ThinSet {
    let lp = slice.point(approx_xi);
    let s = lp.len();
    let scale = slice.scale();
    let lr = lp.rows(1, s - 1).into_owned();
    if lr.norm() <= 1e-7 * scale {
        return if slice.offset.norm() <= 1e-12 * scale { ThinSet::Point(DVector::zeros(s)) } else { ThinSet::Empty };
    }
    let mut rho = DVector::zeros(s);
    rho[0] = -lr.norm();
    rho.rows_mut(1, s - 1).copy_from(&lr);
    rho /= rho.norm();
    let n = &slice.basis;
    let p_rho = &rho - n * (n.transpose() * &rho);
    if p_rho.norm() > 1e-8 {
        let alpha = p_rho.dot(&slice.offset) / p_rho.norm_squared();
        let lam = &rho * alpha;
        let res = (&lam - slice.point(&slice.coords(&lam))).norm();
        if alpha < -1e-9 * scale || res > 1e-6 * scale {
            return ThinSet::Empty;
        }
        ThinSet::Point(&rho * alpha.max(0.0))
    } else if slice.offset.norm() <= 1e-9 * scale {
        ThinSet::Segment { dir: rho, len: radius }
    } else {
        ThinSet::Empty
    }
}

/// Newton refinement of the boundary KKT system `c = θ∇φ(ξ)`, `φ(ξ) = λ0 + ‖λr‖ = 0`.
fn polish(slice: &MultiplierSlice, c: &DVector<f64>, xi: DVector<f64>) -> DVector<f64> {
    let k = slice.dim();
    let s = slice.offset.len();
    let n = &slice.basis;
    let nr = n.rows(1, s - 1).into_owned();
    let kkt = |xi: &DVector<f64>| -> Option<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let lam = slice.point(xi);
        let lr = lam.rows(1, s - 1).into_owned();
        let r = lr.norm();
        if r < 1e-12 {
            return None;
        }
        let mut w = DVector::zeros(s);
        w[0] = 1.0;
        w.rows_mut(1, s - 1).copy_from(&(&lr / r));
        let grad = n.transpose() * w;
        let proj = (DMatrix::identity(s - 1, s - 1) - &lr * lr.transpose() / (r * r)) / r;
        let hess = nr.transpose() * proj * &nr;
        let phi = lam[0] + r;
        Some((grad, hess, DVector::from_element(1, phi)))
    };
    let residual = |xi: &DVector<f64>, theta: f64| -> Option<f64> {
        let (g, _, phi) = kkt(xi)?;
        Some(((c - &g * theta).norm_squared() + phi[0] * phi[0]).sqrt())
    };
    let Some((g0, _, _)) = kkt(&xi) else { return xi };
    let gn = g0.norm_squared();
    if gn < 1e-24 {
        return xi;
    }
    let mut theta = c.dot(&g0) / gn;
    if theta < 0.0 {
        return xi;
    }
    let start_res = residual(&xi, theta).unwrap_or(f64::INFINITY);
    let mut cur = xi.clone();
    let mut cur_res = start_res;
    for _ in 0..30 {
        let Some((g, h, phi)) = kkt(&cur) else { break };
        let mut jac = DMatrix::zeros(k + 1, k + 1);
        jac.view_mut((0, 0), (k, k)).copy_from(&(-&h * theta));
        jac.view_mut((0, k), (k, 1)).copy_from(&(-&g));
        jac.view_mut((k, 0), (1, k)).copy_from(&g.transpose());
        let mut f = DVector::zeros(k + 1);
        f.rows_mut(0, k).copy_from(&(c - &g * theta));
        f[k] = phi[0];
        let (step, _) = linalg::lstsq(&jac, &(-f), 1e-14);
        let cand = &cur + step.rows(0, k);
        let cand_theta = theta + step[k];
        match residual(&cand, cand_theta) {
            Some(r) if r < cur_res => {
                cur = cand;
                theta = cand_theta;
                cur_res = r;
            }
            _ => break,
        }
        if cur_res < 1e-15 * (1.0 + c.norm()) {
            break;
        }
    }
    if theta < 0.0 || cur_res >= start_res {
        return xi;
    }
    // Land exactly on the boundary ray through the polished point.
    let lam = slice.point(&cur);
    if dual_depth(&lam) < -1e-12 * slice.scale() {
        return xi;
    }
    cur
}

fn interior_max(slice: &MultiplierSlice, c: &DVector<f64>, start: DVector<f64>, radius: f64) -> DVector<f64> {
    let k = slice.dim();
    let blocks = [soc_block(slice, 0), SocBlock::ball(k, k, radius)];
    let xi = barrier::maximize(c, &blocks, start, BarrierOpts::default());
    if xi.norm() < radius * (1.0 - 1e-6) {
        polish(slice, c, xi)
    } else {
        xi
    }
}

/// Minimum-norm point of the feasible region, within `radius` in slice coordinates.
fn min_norm_point(slice: &MultiplierSlice, radius: f64) -> Option<DVector<f64>> {
    let k = slice.dim();
    if k == 0 {
        return dual_contains(&ConePoint::from_vec(&slice.offset), FEAS_REL * slice.scale()).then(|| slice.offset.clone());
    }
    match region(slice, radius) {
        Region::Infeasible => None,
        Region::Thin(xi) => match thin_set(slice, &xi, radius) {
            ThinSet::Empty => None,
            ThinSet::Point(l) => Some(l),
            ThinSet::Segment { .. } => Some(DVector::zeros(slice.offset.len())),
        },
        Region::Interior(xi) => {
            // min r  s.t.  ‖ξ‖ ≤ r, λ(ξ) ∈ Q*, ‖ξ‖ ≤ radius
            let mut cone = soc_block(slice, 1);
            cone.g = cone.g.clone();
            let mut norm_g = DMatrix::zeros(k + 1, k + 1);
            norm_g[(0, k)] = 1.0;
            for i in 0..k {
                norm_g[(i + 1, i)] = 1.0;
            }
            let norm_block = SocBlock::new(norm_g, DVector::zeros(k + 1));
            let ball = SocBlock::ball(k + 1, k, radius);
            let mut x0 = DVector::zeros(k + 1);
            x0.rows_mut(0, k).copy_from(&xi);
            x0[k] = xi.norm() + 1.0;
            let mut c = DVector::zeros(k + 1);
            c[k] = -1.0;
            let x = barrier::maximize(&c, &[cone, norm_block, ball], x0, BarrierOpts::default());
            Some(slice.point(&x.rows(0, k).into_owned()))
        }
    }
}

/// `max ⟨d, λ⟩` over the slice, optionally capped by `‖λ‖ ≤ bound`.
pub fn maximize_linear(slice: &MultiplierSlice, d: &DVector<f64>, bound: Option<f64>) -> ConeLpResult {
    if slice.empty {
        return ConeLpResult::infeasible();
    }
    let k = slice.dim();
    let scale = slice.scale();
    let off2 = slice.offset.norm_squared();
    let cap = match bound {
        Some(b) => {
            if b * b < off2 * (1.0 - 1e-12) - 1e-18 {
                return ConeLpResult::infeasible();
            }
            Some((b * b - off2).max(0.0).sqrt())
        }
        None => None,
    };
    if k == 0 || cap == Some(0.0) {
        return if dual_contains(&ConePoint::from_vec(&slice.offset), FEAS_REL * scale) {
            ConeLpResult::optimal(slice.offset.clone(), d, k == 0)
        } else {
            ConeLpResult::infeasible()
        };
    }
    let c = slice.basis.transpose() * d;
    if c.norm() <= 1e-12 * (1.0 + d.norm()) {
        return match min_norm_point(slice, cap.unwrap_or_else(|| phase1_radius(slice))) {
            Some(l) => ConeLpResult::optimal(l, d, true),
            None => ConeLpResult::infeasible(),
        };
    }
    let homogeneous = slice.offset.norm() <= 1e-12;
    if homogeneous {
        // The feasible region is a cone: the answer scales with the radius.
        let r = cap.unwrap_or(1.0);
        let unit = bounded_max(slice, &c, r);
        return match unit {
            None => ConeLpResult::infeasible(),
            Some(xi) => {
                let val = c.dot(&xi);
                if val <= 1e-10 * c.norm() * r {
                    ConeLpResult::optimal(DVector::zeros(slice.offset.len()), d, false)
                } else if cap.is_some() {
                    ConeLpResult::optimal(slice.point(&xi), d, false)
                } else {
                    ConeLpResult::unbounded()
                }
            }
        };
    }
    if let Some(r) = cap {
        return match bounded_max(slice, &c, r) {
            Some(xi) => ConeLpResult::optimal(slice.point(&xi), d, false),
            None => ConeLpResult::infeasible(),
        };
    }
    // Unbounded iff some recession direction of the slice improves the objective.
    let rec = MultiplierSlice { offset: DVector::zeros(slice.offset.len()), ..slice.clone() };
    let rec_dir = bounded_max(&rec, &c, 1.0);
    let first = bounded_max(slice, &c, phase1_radius(slice));
    let Some(mut xi) = first else { return ConeLpResult::infeasible() };
    if let Some(rd) = rec_dir {
        if c.dot(&rd) > 1e-9 * c.norm() {
            return ConeLpResult::unbounded();
        }
    }
    let mut radius = 10.0 * (1.0 + xi.norm());
    loop {
        match bounded_max(slice, &c, radius) {
            Some(x) => xi = x,
            None => return ConeLpResult::infeasible(),
        }
        if xi.norm() < radius * (1.0 - 1e-6) {
            break;
        }
        if radius > 1e10 * scale {
            // Supremum not attained.
            return ConeLpResult::unbounded();
        }
        radius *= 100.0;
    }
    ConeLpResult::optimal(slice.point(&xi), d, false)
}

/// `max cᵀξ` over the slice intersected with `‖ξ‖ ≤ radius`.
fn bounded_max(slice: &MultiplierSlice, c: &DVector<f64>, radius: f64) -> Option<DVector<f64>> {
    match region(slice, radius) {
        Region::Infeasible => None,
        Region::Interior(xi0) => Some(interior_max(slice, c, xi0, radius)),
        Region::Thin(xi) => match thin_set(slice, &xi, radius) {
            ThinSet::Empty => None,
            ThinSet::Point(l) => Some(slice.coords(&l)),
            ThinSet::Segment { dir, len } => {
                let cd = c.dot(&slice.coords(&dir));
                let alpha = if cd > 0.0 { len } else { 0.0 };
                Some(slice.coords(&(dir * alpha)))
            }
        },
    }
}

/// A point of `Λ`: the deepest one inside `Q*` within a large ball, or the unique
/// member when the slice touches `Q*` only on its boundary.
pub fn feasibility(slice: &MultiplierSlice) -> Option<DVector<f64>> {
    if slice.empty {
        return None;
    }
    if slice.dim() == 0 {
        return dual_contains(&ConePoint::from_vec(&slice.offset), FEAS_REL * slice.scale()).then(|| slice.offset.clone());
    }
    let radius = phase1_radius(slice);
    match region(slice, radius) {
        Region::Infeasible => None,
        Region::Interior(_) => {
            let d = max_depth_full(slice, radius);
            Some(slice.point(&d))
        }
        Region::Thin(xi) => match thin_set(slice, &xi, radius) {
            ThinSet::Empty => None,
            ThinSet::Point(l) => Some(l),
            ThinSet::Segment { dir, len } => Some(dir * (0.5 * len.min(1.0))),
        },
    }
}

/// Deepest point run to full accuracy (no early exit), capped so cones do not run off.
fn max_depth_full(slice: &MultiplierSlice, radius: f64) -> DVector<f64> {
    let k = slice.dim();
    let r = if slice.offset.norm() <= 1e-12 { 1.0 } else { radius.min(1e2 * slice.scale()) };
    let mut block = soc_block(slice, 1);
    block.g[(0, k)] = -1.0;
    let ball = SocBlock::ball(k + 1, k, r);
    let start = max_depth(slice, r);
    let mut x0 = DVector::zeros(k + 1);
    x0.rows_mut(0, k).copy_from(&start.xi);
    x0[k] = start.tau - 1e-3 * slice.scale();
    let mut c = DVector::zeros(k + 1);
    c[k] = 1.0;
    let x = barrier::maximize(&c, &[block, ball], x0, BarrierOpts { gap: 1e-10, ..Default::default() });
    x.rows(0, k).into_owned()
}

/// Out-of-kernel detection. Returns `(true, ū)` when some critical direction has
/// `∇g(x̄)ū ≠ 0`, with `ū` maximizing `∇g0(x̄)u` over the critical cone in the unit ball.
pub fn out_of_kernel_probe(inst: &Instance) -> (bool, Option<DVector<f64>>) {
    let gb = inst.base_g();
    let fb = inst.base_f();
    let j = &gb.jac;
    let tol = &inst.tol;
    let slice = build_slice(j, &(-&fb.grad), tol.rank);
    let Some(lam) = feasibility(&slice) else { return (false, None) };
    let scale = lam.norm().max(1.0);
    if j.norm() <= tol.zero {
        return (false, None);
    }
    if dual_depth(&lam) > 1e-8 * scale {
        return (false, None);
    }
    if lam.norm() > 1e-8 {
        // Critical directions map into the ray spanned by hat(λ).
        let hat = ConePoint::from_vec(&lam).hat().to_vec();
        let hat = &hat / hat.norm();
        let (u0, res) = linalg::lstsq(j, &hat, tol.rank);
        if res > 1e-7 || u0.norm() < 1e-14 {
            return (false, None);
        }
        let u = &u0 / u0.norm();
        return (true, Some(u));
    }
    // Λ = {0}: the range of ∇g(x̄) meets int Q, solve the probe directly.
    let n = inst.n;
    let s = 1 + inst.m;
    let mut g = DMatrix::zeros(s, n + 1);
    g.columns_mut(0, n).copy_from(j);
    g[(0, n)] = -1.0;
    let cone = SocBlock::new(g, DVector::zeros(s));
    let ball = SocBlock::ball(n + 1, n, 1.0);
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = -1.0;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let x = barrier::maximize(&c, &[cone, ball], x0, BarrierOpts { gap: 1e-12, ..Default::default() });
    let start = x.rows(0, n).into_owned();
    if x[n] <= 0.0 {
        return (false, None);
    }
    let obj = j.row(0).transpose();
    let cone = SocBlock::new(j.clone(), DVector::zeros(s));
    let ball = SocBlock::ball(n, n, 1.0);
    let u = barrier::maximize(&obj, &[cone, ball], start, BarrierOpts::default());
    if obj.dot(&u) > 1e-9 {
        let u = &u / u.norm();
        (true, Some(u))
    } else {
        (false, None)
    }
}
