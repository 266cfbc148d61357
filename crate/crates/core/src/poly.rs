//! Sparse multivariate polynomials with exact first and second derivatives.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_DEGREE: u32 = 6;

/// One monomial `c · x^e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub c: f64,
    pub e: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFunc {
    pub n: usize,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("term {index}: exponent vector has length {got}, expected {n}")]
    Arity { index: usize, got: usize, n: usize },
    #[error("term {index}: coefficient is not finite")]
    NonFinite { index: usize },
    #[error("term {index}: degree {degree} exceeds maximum {max}")]
    Degree { index: usize, degree: u32, max: u32 },
}

impl PolyFunc {
    pub fn zero(n: usize) -> Self {
        PolyFunc { n, terms: Vec::new() }
    }

    /// Validates, merges duplicate exponents and drops zero coefficients.
    /// The result is sorted by exponent vector.
    pub fn new(n: usize, terms: Vec<Term>, max_degree: u32) -> Result<Self, PolyError> {
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (index, t) in terms.into_iter().enumerate() {
            if t.e.len() != n {
                return Err(PolyError::Arity { index, got: t.e.len(), n });
            }
            if !t.c.is_finite() {
                return Err(PolyError::NonFinite { index });
            }
            let degree: u32 = t.e.iter().sum();
            if degree > max_degree {
                return Err(PolyError::Degree { index, degree, max: max_degree });
            }
            *merged.entry(t.e).or_insert(0.0) += t.c;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(e, c)| Term { c, e })
            .collect();
        Ok(PolyFunc { n, terms })
    }

    /// Builds `Σ c_i x^{e_i}` from `(c, e)` pairs; panics on invalid input.
    pub fn from_pairs(n: usize, pairs: &[(f64, &[u32])]) -> Self {
        let terms = pairs.iter().map(|(c, e)| Term { c: *c, e: e.to_vec() }).collect();
        PolyFunc::new(n, terms, u32::MAX).expect("valid polynomial")
    }

    /// Linear polynomial `b + aᵀx`.
    pub fn affine(a: &[f64], b: f64) -> Self {
        let n = a.len();
        let mut pairs: Vec<(f64, Vec<u32>)> = vec![(b, vec![0; n])];
        for (i, &ai) in a.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            pairs.push((ai, e));
        }
        let terms = pairs.into_iter().map(|(c, e)| Term { c, e }).collect();
        PolyFunc::new(n, terms, u32::MAX).expect("valid polynomial")
    }

    /// Quadratic `½ xᵀHx + aᵀx + b` with `H` symmetric.
    pub fn quadratic(h: &DMatrix<f64>, a: &[f64], b: f64) -> Self {
        let n = a.len();
        let mut terms = PolyFunc::affine(a, b).terms;
        for i in 0..n {
            for j in i..n {
                let mut e = vec![0; n];
                e[i] += 1;
                e[j] += 1;
                let c = if i == j { 0.5 * h[(i, i)] } else { 0.5 * (h[(i, j)] + h[(j, i)]) };
                terms.push(Term { c, e });
            }
        }
        PolyFunc::new(n, terms, u32::MAX).expect("valid polynomial")
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.e.iter().sum()).max().unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let terms = self.terms.iter().map(|t| Term { c: t.c * s, e: t.e.clone() }).collect();
        PolyFunc::new(self.n, terms, u32::MAX).expect("valid polynomial")
    }

    pub fn add(&self, other: &PolyFunc) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        PolyFunc::new(self.n, terms, u32::MAX).expect("valid polynomial")
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.c * monomial(x, &t.e, None)).sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for t in &self.terms {
            for i in 0..self.n {
                if t.e[i] > 0 {
                    g[i] += t.c * monomial(x, &t.e, Some((i, None)));
                }
            }
        }
        g
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut h = DMatrix::zeros(n, n);
        for t in &self.terms {
            for i in 0..n {
                if t.e[i] == 0 {
                    continue;
                }
                for j in i..n {
                    let ok = if i == j { t.e[i] >= 2 } else { t.e[j] >= 1 };
                    if ok {
                        h[(i, j)] += t.c * monomial(x, &t.e, Some((i, Some(j))));
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    pub fn bundle(&self, x: &DVector<f64>) -> FBundle {
        FBundle { value: self.eval(x), grad: self.gradient(x), hess: self.hessian(x) }
    }
}

/// Value of `x^e`, optionally differentiated once by `x_i` and once more by `x_j`.
fn monomial(x: &DVector<f64>, e: &[u32], diff: Option<(usize, Option<usize>)>) -> f64 {
    let mut k: Vec<u32> = e.to_vec();
    let mut coef = 1.0;
    if let Some((i, j)) = diff {
        coef *= k[i] as f64;
        k[i] -= 1;
        if let Some(j) = j {
            coef *= k[j] as f64;
            if k[j] == 0 {
                return 0.0;
            }
            k[j] -= 1;
        }
    }
    let mut v = coef;
    for (idx, &p) in k.iter().enumerate() {
        if p > 0 {
            v *= x[idx].powi(p as i32);
        }
    }
    v
}

/// Value, gradient and Hessian of a scalar polynomial at a point.
#[derive(Debug, Clone)]
pub struct FBundle {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Value, Jacobian and component Hessians of the constraint map at a point.
#[derive(Debug, Clone)]
pub struct GBundle {
    pub value: DVector<f64>,
    /// `(1+m) × n`, row `i` is `∇g_i`.
    pub jac: DMatrix<f64>,
    pub hess: Vec<DMatrix<f64>>,
}

impl GBundle {
    pub fn eval(g: &[PolyFunc], x: &DVector<f64>) -> Self {
        let s = g.len();
        let n = x.len();
        let mut value = DVector::zeros(s);
        let mut jac = DMatrix::zeros(s, n);
        let mut hess = Vec::with_capacity(s);
        for (i, gi) in g.iter().enumerate() {
            value[i] = gi.eval(x);
            jac.row_mut(i).copy_from(&gi.gradient(x).transpose());
            hess.push(gi.hessian(x));
        }
        GBundle { value, jac, hess }
    }

    /// `∇²g(x)(v,u)`, component `i` equal to `vᵀ H_i u`.
    pub fn second_order_action(&self, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.hess.len(), self.hess.iter().map(|h| v.dot(&(h * u))))
    }

    /// The matrix `D` with `D u = ∇²g(x)(v,u)`.
    pub fn action_matrix(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = v.len();
        let mut d = DMatrix::zeros(self.hess.len(), n);
        for (i, h) in self.hess.iter().enumerate() {
            d.row_mut(i).copy_from(&(h * v).transpose());
        }
        d
    }

    /// `Σ λ_i ∇²g_i(x)`.
    pub fn weighted_hessian(&self, lambda: &DVector<f64>) -> DMatrix<f64> {
        let n = self.jac.ncols();
        let mut h = DMatrix::zeros(n, n);
        for (i, hi) in self.hess.iter().enumerate() {
            if lambda[i] != 0.0 {
                h += hi * lambda[i];
            }
        }
        h
    }
}

/// Free-standing form of [`GBundle::second_order_action`].
pub fn second_order_action(g: &GBundle, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    g.second_order_action(v, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalization_merges_and_drops() {
        let p = PolyFunc::new(
            2,
            vec![
                Term { c: 1.0, e: vec![1, 0] },
                Term { c: 2.0, e: vec![1, 0] },
                Term { c: 0.0, e: vec![0, 1] },
                Term { c: 1.0, e: vec![0, 2] },
                Term { c: -1.0, e: vec![0, 2] },
            ],
            6,
        )
        .unwrap();
        assert_eq!(p.terms, vec![Term { c: 3.0, e: vec![1, 0] }]);
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(PolyFunc::new(2, vec![Term { c: 1.0, e: vec![1] }], 6).is_err());
        assert!(PolyFunc::new(1, vec![Term { c: f64::NAN, e: vec![1] }], 6).is_err());
        assert!(PolyFunc::new(1, vec![Term { c: 1.0, e: vec![7] }], 6).is_err());
    }

    #[test]
    fn derivatives_of_cubic() {
        // p = x^2 y + 3 y^3 - 2
        let p = PolyFunc::from_pairs(2, &[(1.0, &[2, 1]), (3.0, &[0, 3]), (-2.0, &[0, 0])]);
        let x = DVector::from_column_slice(&[2.0, -1.0]);
        assert_eq!(p.eval(&x), -4.0 - 3.0 - 2.0);
        assert_eq!(p.gradient(&x), DVector::from_column_slice(&[-4.0, 4.0 + 9.0]));
        let h = p.hessian(&x);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[-2.0, 4.0, 4.0, -18.0]));
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let p = PolyFunc::from_pairs(3, &[(5.0, &[0, 0, 0])]);
        let x = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(p.gradient(&x).norm(), 0.0);
        assert_eq!(p.hessian(&x).norm(), 0.0);
    }

    #[test]
    fn quadratic_builder_roundtrip() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 4.0]);
        let p = PolyFunc::quadratic(&h, &[1.0, -1.0], 0.5);
        let x = DVector::from_column_slice(&[0.3, -0.2]);
        assert!((p.hessian(&x) - &h).norm() < 1e-15);
        assert!((p.gradient(&DVector::zeros(2)) - DVector::from_column_slice(&[1.0, -1.0])).norm() < 1e-15);
        assert_eq!(p.eval(&DVector::zeros(2)), 0.5);
    }
}
