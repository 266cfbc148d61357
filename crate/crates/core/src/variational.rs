//! Second-order objects at the base point: critical cone, multiplier sets,
//! directional multipliers, the curvature term `H`, the infimum function `ρ`,
//! `λ̄` and 2-regularity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::lorentz::{ConePoint, NormalCone, Stratum};
use crate::poly::GBundle;
use crate::problem::Instance;
use crate::subsolver::{self, ConeLpResult, LpStatus, MultiplierSlice};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VarError {
    #[error("directional multiplier set is empty: the objective is unbounded over the multiplier slice")]
    UnboundedMultiplierSet,
    #[error("lambda_bar scaling is degenerate (denominator {0:.3e})")]
    DegenerateScaling(f64),
    #[error("reduced quadratic has eigenvalue {0:.3e}")]
    NumericalIndefiniteness(f64),
    #[error("direction is not critical (residual {0:.3e})")]
    NotCritical(f64),
    #[error("curvature term undefined: g0(x) = {0:.3e} on the boundary")]
    VertexDivision(f64),
}

#[derive(Debug, Clone)]
pub enum CriticalCone {
    /// Orthonormal basis of `ker ∇g(x̄) ∩ ∇f(x̄)^⊥`.
    Subspace(DMatrix<f64>),
    /// `{u : ∇g(x̄)u ∈ Q, ⟨∇f(x̄), u⟩ = 0}`.
    ConicSlice { jac: DMatrix<f64>, grad_f: DVector<f64> },
}

impl CriticalCone {
    /// Larger of the cone and orthogonality violations of `u` (≤ 0 up to `tol` means member).
    pub fn residual(&self, u: &DVector<f64>) -> f64 {
        match self {
            CriticalCone::Subspace(b) => (u - b * (b.transpose() * u)).norm(),
            CriticalCone::ConicSlice { jac, grad_f } => {
                let q = ConePoint::from_vec(&(jac * u));
                let cone = q.qr.norm() - q.q0;
                cone.max(grad_f.dot(u).abs())
            }
        }
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        self.residual(u) <= tol * (1.0 + u.norm())
    }
}

/// Subspace form whenever no critical direction leaves `ker ∇g(x̄)`.
pub fn critical_cone(inst: &Instance) -> CriticalCone {
    let (out, _) = subsolver::out_of_kernel_probe(inst);
    let jac = inst.base_g().jac.clone();
    let grad_f = inst.base_f().grad.clone();
    if out {
        CriticalCone::ConicSlice { jac, grad_f }
    } else {
        let mut stacked = DMatrix::zeros(jac.nrows() + 1, inst.n);
        stacked.rows_mut(0, jac.nrows()).copy_from(&jac);
        stacked.row_mut(jac.nrows()).copy_from(&grad_f.transpose());
        CriticalCone::Subspace(linalg::null_space(&stacked, inst.tol.rank))
    }
}

/// `Λ(x̄, -∇f(x̄))` as a slice.
pub fn multiplier_slice(inst: &Instance) -> MultiplierSlice {
    subsolver::build_slice(&inst.base_g().jac, &(-&inst.base_f().grad), inst.tol.rank)
}

pub fn grad_f_vanishes(inst: &Instance) -> bool {
    inst.base_f().grad.norm() <= inst.tol.zero
}

/// `Λ⁰`: `{0}` when `∇f(x̄) = 0`, otherwise the full multiplier set.
pub fn lambda0_set(inst: &Instance) -> MultiplierSlice {
    if grad_f_vanishes(inst) {
        MultiplierSlice::origin(1 + inst.m)
    } else {
        multiplier_slice(inst)
    }
}

/// Argmax of `⟨λ, ∇²g(x̄)(u,u)⟩` over `Λ(x̄, -∇f(x̄))`.
pub fn directional_multipliers(inst: &Instance, u: &DVector<f64>) -> Result<ConeLpResult, VarError> {
    let k = critical_cone(inst);
    if !k.contains(u, 1e-7) {
        return Err(VarError::NotCritical(k.residual(u)));
    }
    directional_unchecked(inst, &multiplier_slice(inst), u)
}

/// Same as [`directional_multipliers`] with a precomputed slice and no membership check.
pub fn directional_unchecked(inst: &Instance, slice: &MultiplierSlice, u: &DVector<f64>) -> Result<ConeLpResult, VarError> {
    let d = inst.base_g().second_order_action(u, u);
    let r = subsolver::maximize_linear(slice, &d, None);
    match r.status {
        LpStatus::Unbounded => Err(VarError::UnboundedMultiplierSet),
        _ => Ok(r),
    }
}

/// Curvature term `H(x, λ)` for the constraint bundle at `x`.
pub fn curvature_h(lambda: &DVector<f64>, gb: &GBundle, tol: &crate::lorentz::ConeTol) -> Result<DMatrix<f64>, VarError> {
    let n = gb.jac.ncols();
    let q = ConePoint::from_vec(&gb.value);
    if q.classify(tol) != Stratum::BoundaryNonzero || lambda[0] == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if q.q0.abs() <= tol.zero {
        return Err(VarError::VertexDivision(q.q0));
    }
    Ok(lorentz_gram(&gb.jac) * (-lambda[0] / q.q0))
}

/// `∇g_r(x)ᵀ∇g_r(x) - ∇g₀(x)ᵀ∇g₀(x)`.
pub fn lorentz_gram(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let s = jac.nrows();
    let jr = jac.rows(1, s - 1);
    let j0 = jac.row(0);
    jr.transpose() * jr - j0.transpose() * j0
}

/// `∇²f(x̄) + ∇²⟨λ, g⟩(x̄)`.
pub fn lagrangian_hessian(inst: &Instance, lambda: &DVector<f64>) -> DMatrix<f64> {
    &inst.base_f().hess + inst.base_g().weighted_hessian(lambda)
}

/// Linear and quadratic constraints describing
/// `{u : ⟨λ, ∇g(x̄)u⟩ = 0, λ₀(‖∇g_r(x̄)u‖² - (∇g₀(x̄)u)²) = 0}`.
pub fn u_constraints(inst: &Instance, lambda: &DVector<f64>) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let jac = &inst.base_g().jac;
    let a = jac.transpose() * lambda;
    let c = (lambda[0].abs() > 1e-12).then(|| lorentz_gram(jac));
    (a, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RhoStatus {
    Finite,
    InfeasibleInfinite,
}

#[derive(Debug, Clone)]
pub struct Rho {
    pub value: f64,
    pub status: RhoStatus,
    pub z: Option<DVector<f64>>,
}

/// `u ↦ ρ(u, λ, v)` as a quadratic form `uᵀRu`, finite on `{u : ⟨extra, u⟩ = 0}`
/// (no restriction when `extra` is `None`).
#[derive(Debug, Clone)]
pub struct RhoForm {
    pub r: DMatrix<f64>,
    pub extra: Option<DVector<f64>>,
    // Pieces needed to reconstruct the minimizer z.
    a: DVector<f64>,
    lambda: DVector<f64>,
    d_v: DMatrix<f64>,
    w: DMatrix<f64>,
    f: DMatrix<f64>,
    b_pinv: DMatrix<f64>,
}

impl RhoForm {
    pub fn value(&self, u: &DVector<f64>) -> f64 {
        if let Some(b) = &self.extra {
            if b.dot(u).abs() > 1e-9 * (1.0 + b.norm() * u.norm()) {
                return f64::INFINITY;
            }
        }
        u.dot(&(&self.r * u))
    }

    pub fn minimizer(&self, u: &DVector<f64>) -> DVector<f64> {
        let a2 = self.a.norm_squared();
        let z0 = if self.extra.is_none() && a2 > 0.0 {
            let lam_d = self.lambda.dot(&(&self.d_v * u));
            &self.a * (-lam_d / a2)
        } else {
            DVector::zeros(self.a.len())
        };
        let y = -(&self.b_pinv * (&self.f * u));
        z0 + &self.w * y
    }
}

pub fn rho_form(inst: &Instance, lambda: &DVector<f64>, v: &DVector<f64>) -> Result<RhoForm, VarError> {
    let gb = inst.base_g();
    let n = inst.n;
    let s = 1 + inst.m;
    let jac = &gb.jac;
    let d_v = gb.action_matrix(v);
    let mut sig = DMatrix::identity(s, s) * (-lambda[0]);
    sig[(0, 0)] = lambda[0];
    let a = jac.transpose() * lambda;
    let b = d_v.transpose() * lambda;
    let a_zero = a.norm() <= 1e-12 * (1.0 + jac.norm() * lambda.norm());
    let (w, e, extra) = if a_zero {
        (DMatrix::identity(n, n), d_v.clone(), Some(b))
    } else {
        let row = DMatrix::from_row_slice(1, n, a.as_slice());
        let w = linalg::null_space(&row, 1e-12);
        let e = &d_v - jac * &a * b.transpose() / a.norm_squared();
        (w, e, None)
    };
    let jw = jac * &w;
    let bmat = linalg::symmetrize(&(jw.transpose() * &sig * &jw));
    let f = jw.transpose() * &sig * &e;
    let b_pinv = psd_pinv(&bmat)?;
    let r = linalg::symmetrize(&(e.transpose() * &sig * &e - f.transpose() * &b_pinv * &f));
    Ok(RhoForm { r, extra, a, lambda: lambda.clone(), d_v, w, f, b_pinv })
}

/// Pseudoinverse of a matrix that should be PSD; small negative eigenvalues are clamped.
fn psd_pinv(b: &DMatrix<f64>) -> Result<DMatrix<f64>, VarError> {
    let k = b.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = SymmetricEigen::new(b.clone());
    let scale = sym.eigenvalues.amax().max(1.0);
    let tol = 1e-9 * scale;
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        let ev = sym.eigenvalues[i];
        if ev < -tol {
            return Err(VarError::NumericalIndefiniteness(ev));
        }
        if ev > tol {
            let col = sym.eigenvectors.column(i);
            out += col * col.transpose() / ev;
        }
    }
    Ok(out)
}

/// `ρ(u, λ, v)`.
pub fn rho(inst: &Instance, u: &DVector<f64>, lambda: &DVector<f64>, v: &DVector<f64>) -> Result<Rho, VarError> {
    let form = rho_form(inst, lambda, v)?;
    let value = form.value(u);
    if value.is_infinite() {
        return Ok(Rho { value, status: RhoStatus::InfeasibleInfinite, z: None });
    }
    let z = form.minimizer(u);
    Ok(Rho { value: value.max(0.0), status: RhoStatus::Finite, z: Some(z) })
}

/// Objective of the `ρ` problem at a given `z`.
pub fn rho_objective(inst: &Instance, u: &DVector<f64>, lambda: &DVector<f64>, v: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let gb = inst.base_g();
    let p = &gb.jac * z + gb.second_order_action(v, u);
    let pr = p.rows(1, p.len() - 1).norm_squared();
    -lambda[0] * (pr - p[0] * p[0])
}

/// `λ̄ = ‖∇f(x̄)‖ / ‖∇g(x̄)ᵀ∇ĝ(x̄)ū‖ · ∇ĝ(x̄)ū`.
pub fn lambda_bar(inst: &Instance, u_bar: &DVector<f64>) -> Result<DVector<f64>, VarError> {
    let jac = &inst.base_g().jac;
    let gf = inst.base_f().grad.norm();
    let hat = ConePoint::from_vec(&(jac * u_bar)).hat().to_vec();
    if gf <= inst.tol.zero {
        return Ok(DVector::zeros(1 + inst.m));
    }
    let den = (jac.transpose() * &hat).norm();
    if den <= inst.tol.zero {
        return Err(VarError::DegenerateScaling(den));
    }
    Ok(hat * (gf / den))
}

/// Rank test for `[∇g(x̄) | ∇²g(x̄)(v,·)P]` with `P` a basis of `ker ∇g(x̄)`.
pub fn two_regular(inst: &Instance, v: &DVector<f64>) -> bool {
    two_regular_matrix(inst, v).map_or(false, |mat| linalg::rank(&mat, inst.tol.rank) == 1 + inst.m)
}

pub fn two_regular_matrix(inst: &Instance, v: &DVector<f64>) -> Option<DMatrix<f64>> {
    let gb = inst.base_g();
    let jac = &gb.jac;
    let p = linalg::null_space(jac, inst.tol.rank);
    let dp = gb.action_matrix(v) * &p;
    let s = jac.nrows();
    let mut mat = DMatrix::zeros(s, jac.ncols() + dp.ncols());
    mat.columns_mut(0, jac.ncols()).copy_from(jac);
    mat.columns_mut(jac.ncols(), dp.ncols()).copy_from(&dp);
    Some(mat)
}

/// Residuals of the defining relations of the quadruple set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZResiduals {
    pub orthogonality: f64,
    pub boundary: f64,
    pub kernel: f64,
    pub normal: f64,
}

impl ZResiduals {
    pub fn max(&self) -> f64 {
        self.orthogonality.max(self.boundary).max(self.kernel).max(self.normal)
    }
}

#[derive(Debug, Clone)]
pub struct QuadrupleZ {
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub q: ConePoint,
    pub residuals: ZResiduals,
}

impl QuadrupleZ {
    pub fn new(inst: &Instance, u: DVector<f64>, lambda: DVector<f64>, v: DVector<f64>, w: DVector<f64>) -> Self {
        let gb = inst.base_g();
        let jac = &gb.jac;
        let ju = jac * &u;
        let qv = jac * &w + gb.second_order_action(&v, &v) * 0.5;
        let q = ConePoint::from_vec(&qv);
        let scale = 1.0 + lambda.norm() * ju.norm();
        let orthogonality = lambda.dot(&ju).abs() / scale;
        let jr = ju.rows(1, ju.len() - 1).norm_squared();
        let boundary = (lambda[0] * (jr - ju[0] * ju[0])).abs() / (1.0 + lambda.norm() * ju.norm_squared());
        let kernel = (jac * &v).norm();
        let tol = inst.tol.cone_tol();
        let normal = match crate::lorentz::normal_cone_description(&q, &tol) {
            Ok(nc) => normal_violation(&nc, &ConePoint::from_vec(&lambda)),
            Err(_) => f64::INFINITY,
        };
        QuadrupleZ { u, lambda, v, w, q, residuals: ZResiduals { orthogonality, boundary, kernel, normal } }
    }
}

fn normal_violation(nc: &NormalCone, lambda: &ConePoint) -> f64 {
    match nc {
        NormalCone::FullDual => (lambda.qr.norm() + lambda.q0).max(0.0),
        NormalCone::Origin => lambda.norm(),
        NormalCone::Ray(g) => {
            let gv = g.to_vec();
            let l = lambda.to_vec();
            let alpha = (l.dot(&gv) / gv.norm_squared()).max(0.0);
            (l - gv * alpha).norm() / (1.0 + lambda.norm())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog as examples;

    fn ex() -> Instance {
        examples::example_degenerate()
    }

    #[test]
    fn critical_cone_of_degenerate_example() {
        match critical_cone(&ex()) {
            CriticalCone::Subspace(b) => {
                assert_eq!(b.ncols(), 2);
                assert!((b.column(0) - DVector::from_column_slice(&[1.0, 0.0, 0.0])).norm() < 1e-12);
                assert!((b.column(1) - DVector::from_column_slice(&[0.0, 1.0, 0.0])).norm() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn critical_cone_of_identity_instances() {
        let inst = examples::identity_zero_gradient();
        match critical_cone(&inst) {
            CriticalCone::ConicSlice { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
        let inst = examples::out_of_kernel();
        let k = critical_cone(&inst);
        assert!(k.contains(&DVector::from_column_slice(&[1.0, 1.0, 0.0]), 1e-9));
        assert!(!k.contains(&DVector::from_column_slice(&[1.0, 0.0, 0.0]), 1e-9));
        assert!(!k.contains(&DVector::from_column_slice(&[-1.0, -1.0, 0.0]), 1e-9));
    }

    #[test]
    fn directional_multiplier_examples() {
        let inst = ex();
        let s15 = 15f64.sqrt();
        let tilde = DVector::from_column_slice(&[-4.0 / s15, 1.0 / s15, 1.0]);
        for v in [[1.0, 0.0, 0.0], [0.5f64.sqrt(), -(0.5f64.sqrt()), 0.0]] {
            let r = directional_multipliers(&inst, &DVector::from_column_slice(&v)).unwrap();
            assert!((r.argmax.unwrap() - &tilde).norm() < 1e-8);
        }
        assert!(matches!(
            directional_multipliers(&inst, &DVector::from_column_slice(&[0.0, 0.0, 1.0])),
            Err(VarError::NotCritical(_))
        ));
    }

    #[test]
    fn curvature_term_cases() {
        let inst = ex();
        let tol = inst.tol.cone_tol();
        let l = DVector::from_column_slice(&[-1.0, 0.5, 0.2]);
        assert_eq!(curvature_h(&l, inst.base_g(), &tol).unwrap().norm(), 0.0);
        let x = DVector::from_column_slice(&[0.3, 0.1, 0.0]);
        let gx = inst.g_bundle(&x);
        assert_eq!(curvature_h(&DVector::zeros(3), &gx, &tol).unwrap().norm(), 0.0);
    }

    #[test]
    fn rho_examples() {
        let inst = ex();
        let s15 = 15f64.sqrt();
        let tilde = DVector::from_column_slice(&[-4.0 / s15, 1.0 / s15, 1.0]);
        let u = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        let r = rho(&inst, &u, &DVector::zeros(3), &DVector::from_column_slice(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(r.value, 0.0);
        for (k, l) in [(1.0, 0.0), (0.6, 0.8), (0.0, 1.0)] {
            let v = DVector::from_column_slice(&[k, l, 0.0]);
            let r = rho(&inst, &u, &tilde, &v).unwrap();
            assert!(r.value > 1e-4, "{k},{l}: {}", r.value);
            let z = r.z.unwrap();
            assert!((rho_objective(&inst, &u, &tilde, &v, &z) - r.value).abs() < 1e-12);
        }
        let v = DVector::from_column_slice(&[2.0, -1.0, 0.0]) / 5f64.sqrt();
        let r = rho(&inst, &u, &tilde, &v).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn lambda_bar_examples() {
        let inst = examples::out_of_kernel();
        let lb = lambda_bar(&inst, &DVector::from_column_slice(&[1.0, 1.0, 0.0])).unwrap();
        assert!((lb - DVector::from_column_slice(&[-1.0, 1.0, 0.0])).norm() < 1e-14);
        let inst = examples::identity_zero_gradient();
        let lb = lambda_bar(&inst, &DVector::from_column_slice(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(lb.norm(), 0.0);
    }

    #[test]
    fn two_regularity_examples() {
        let inst = examples::out_of_kernel();
        assert!(two_regular(&inst, &DVector::from_column_slice(&[1.0, 0.0, 0.0])));
        assert!(two_regular(&ex(), &DVector::from_column_slice(&[1.0, 0.0, 0.0])));
        let zero = examples::zero_constraint();
        assert!(!two_regular(&zero, &DVector::from_column_slice(&[1.0, 0.0])));
    }
}
