//! Geometry of the Lorentz cone `Q = {(q0, qr) : ‖qr‖ ≤ q0}` in `R^{1+m}`.
//!
//! The dual cone used throughout is `Q* = {q̂ : q ∈ Q}` with `q̂ = (-q0, qr)`,
//! which coincides with `-Q`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is outside the cone (violation {0:.3e})")]
    NotInCone(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Position of a point relative to `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stratum {
    Zero,
    Interior,
    BoundaryNonzero,
    Outside,
}

/// Classification thresholds. `cone_rel` scales with `‖q‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeTol {
    pub zero: f64,
    pub cone_abs: f64,
    pub cone_rel: f64,
}

impl Default for ConeTol {
    fn default() -> Self {
        ConeTol { zero: 1e-9, cone_abs: 1e-9, cone_rel: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConePoint {
    pub q0: f64,
    pub qr: DVector<f64>,
}

impl ConePoint {
    pub fn new(q0: f64, qr: &[f64]) -> Self {
        ConePoint { q0, qr: DVector::from_column_slice(qr) }
    }

    /// Splits a stacked vector `(q0, qr)`.
    pub fn from_vec(v: &DVector<f64>) -> Self {
        assert!(!v.is_empty(), "cone point needs an axis coordinate");
        ConePoint { q0: v[0], qr: v.rows(1, v.len() - 1).into_owned() }
    }

    pub fn zero(m: usize) -> Self {
        ConePoint { q0: 0.0, qr: DVector::zeros(m) }
    }

    pub fn to_vec(&self) -> DVector<f64> {
        let mut v = DVector::zeros(1 + self.qr.len());
        v[0] = self.q0;
        v.rows_mut(1, self.qr.len()).copy_from(&self.qr);
        v
    }

    pub fn m(&self) -> usize {
        self.qr.len()
    }

    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.qr.norm_squared()).sqrt()
    }

    /// The reflection `q̂ = (-q0, qr)`.
    pub fn hat(&self) -> Self {
        ConePoint { q0: -self.q0, qr: self.qr.clone() }
    }

    pub fn dot(&self, other: &ConePoint) -> f64 {
        self.q0 * other.q0 + self.qr.dot(&other.qr)
    }

    pub fn scale(&self, a: f64) -> Self {
        ConePoint { q0: a * self.q0, qr: &self.qr * a }
    }

    pub fn classify(&self, tol: &ConeTol) -> Stratum {
        let nrm = self.norm();
        if nrm <= tol.zero {
            return Stratum::Zero;
        }
        let band = tol.cone_abs + tol.cone_rel * nrm;
        let gap = self.q0 - self.qr.norm();
        if gap > band {
            Stratum::Interior
        } else if gap.abs() <= band {
            Stratum::BoundaryNonzero
        } else {
            Stratum::Outside
        }
    }
}

/// `‖qr‖ - q0 ≤ tol`.
pub fn cone_contains(q: &ConePoint, tol: f64) -> bool {
    q.qr.norm() - q.q0 <= tol
}

/// `‖λr‖ + λ0 ≤ tol`.
pub fn dual_contains(lambda: &ConePoint, tol: f64) -> bool {
    lambda.qr.norm() + lambda.q0 <= tol
}

/// Euclidean projection onto `Q`.
pub fn project_onto_cone(p: &ConePoint) -> ConePoint {
    let r = p.qr.norm();
    if r <= p.q0 {
        return p.clone();
    }
    if r <= -p.q0 {
        return ConePoint::zero(p.m());
    }
    let a = 0.5 * (p.q0 + r);
    ConePoint { q0: a, qr: &p.qr * (a / r) }
}

/// Stacked-vector convenience wrapper around [`project_onto_cone`].
pub fn project_vec(p: &DVector<f64>) -> DVector<f64> {
    project_onto_cone(&ConePoint::from_vec(p)).to_vec()
}

/// Distance from a stacked vector to `Q`.
pub fn dist_to_cone(p: &DVector<f64>) -> f64 {
    (p - project_vec(p)).norm()
}

fn ensure_in_cone(q: &ConePoint, tol: &ConeTol) -> Result<Stratum, GeometryError> {
    match q.classify(tol) {
        Stratum::Outside => Err(GeometryError::NotInCone(q.qr.norm() - q.q0)),
        s => Ok(s),
    }
}

/// Signed residual `r` with `u ∈ T_Q(q)` iff `r ≤ 0`.
pub fn tangent_cone_residual(q: &ConePoint, u: &ConePoint, tol: &ConeTol) -> Result<f64, GeometryError> {
    if q.m() != u.m() {
        return Err(GeometryError::Dimension { expected: q.m(), got: u.m() });
    }
    Ok(match ensure_in_cone(q, tol)? {
        Stratum::Zero => u.qr.norm() - u.q0,
        Stratum::Interior => f64::NEG_INFINITY,
        _ => q.qr.dot(&u.qr) / q.qr.norm() - u.q0,
    })
}

/// Structured normal cone `N_Q(q)` for `q ∈ Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalCone {
    /// `q = 0`: the whole dual cone.
    FullDual,
    /// `q` interior: only the origin.
    Origin,
    /// `q ∈ bd Q \ {0}`: the ray `{α q̂ : α ≥ 0}`.
    Ray(ConePoint),
}

impl NormalCone {
    /// Membership of `λ` with absolute tolerance `tol` (scaled by `‖λ‖` for rays).
    pub fn contains(&self, lambda: &ConePoint, tol: f64) -> bool {
        match self {
            NormalCone::FullDual => dual_contains(lambda, tol),
            NormalCone::Origin => lambda.norm() <= tol,
            NormalCone::Ray(gen) => {
                let g = gen.to_vec();
                let l = lambda.to_vec();
                let gn = g.norm_squared();
                let alpha = (l.dot(&g) / gn).max(0.0);
                (l - g * alpha).norm() <= tol * (1.0 + lambda.norm())
            }
        }
    }
}

pub fn normal_cone_description(q: &ConePoint, tol: &ConeTol) -> Result<NormalCone, GeometryError> {
    Ok(match ensure_in_cone(q, tol)? {
        Stratum::Zero => NormalCone::FullDual,
        Stratum::Interior => NormalCone::Origin,
        _ => NormalCone::Ray(q.hat()),
    })
}
