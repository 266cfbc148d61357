//! Global minimization of a quadratic form on the unit sphere under one linear
//! and one homogeneous quadratic equality:
//!
//! `min uᵀMu  s.t.  ‖u‖ = 1, Au = 0, uᵀCu = 0`.
//!
//! After restricting to `ker A`, the semidefinite case reduces to an
//! eigenvalue problem on `ker C`, the indefinite planar case has a closed form,
//! and for dimension at least three the joint numerical range of `(M, C)` is
//! convex, so the minimum equals `max_μ λ_min(M - μC)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::linalg;

#[derive(Debug, Clone)]
pub struct SphereMin {
    pub value: f64,
    pub u: DVector<f64>,
}

fn eig_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = SymmetricEigen::new(linalg::symmetrize(a));
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| sym.eigenvalues[i].total_cmp(&sym.eigenvalues[j]));
    let vals = idx.iter().map(|&i| sym.eigenvalues[i]).collect();
    let vecs = DMatrix::from_columns(&idx.iter().map(|&i| sym.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

fn min_over_span(m: &DMatrix<f64>, basis: &DMatrix<f64>) -> Option<SphereMin> {
    if basis.ncols() == 0 {
        return None;
    }
    let (val, y) = linalg::min_eig(&(basis.transpose() * m * basis));
    let mut u = basis * y;
    u /= u.norm();
    linalg::fix_sign(&mut u);
    Some(SphereMin { value: val, u })
}

/// Solves the problem above; `None` when the feasible set is empty. The rows
/// of `a` are the linear constraints; zero rows are ignored.
pub fn minimize(m: &DMatrix<f64>, a: &[DVector<f64>], c: Option<&DMatrix<f64>>) -> Option<SphereMin> {
    let n = m.nrows();
    let rows: Vec<_> = a.iter().filter(|r| r.norm() > 1e-12).map(|r| r.transpose()).collect();
    let hyper = if rows.is_empty() {
        DMatrix::identity(n, n)
    } else {
        linalg::null_space(&DMatrix::from_rows(&rows), 1e-10)
    };
    let d = hyper.ncols();
    if d == 0 {
        return None;
    }
    let m = linalg::symmetrize(m);
    let Some(c) = c else { return min_over_span(&m, &hyper) };
    let cr = linalg::symmetrize(&(hyper.transpose() * c * &hyper));
    let scale = cr.amax();
    if scale <= 1e-12 {
        return min_over_span(&m, &hyper);
    }
    let (cv, ce) = eig_sorted(&cr);
    let tol = 1e-9 * scale;
    let has_pos = cv[d - 1] > tol;
    let has_neg = cv[0] < -tol;
    if !(has_pos && has_neg) {
        // Semidefinite: uᵀCu = 0 iff Cu = 0.
        let kern: Vec<DVector<f64>> = (0..d).filter(|&i| cv[i].abs() <= tol).map(|i| &hyper * ce.column(i)).collect();
        if kern.is_empty() {
            return None;
        }
        return min_over_span(&m, &DMatrix::from_columns(&kern));
    }
    if d == 2 {
        let (c1, c2) = (cv[0], cv[1]);
        let e1 = &hyper * ce.column(0);
        let e2 = &hyper * ce.column(1);
        let mut best: Option<SphereMin> = None;
        for sgn in [1.0, -1.0] {
            let mut u = &e1 * c2.abs().sqrt() + &e2 * (sgn * c1.abs().sqrt());
            u /= u.norm();
            linalg::fix_sign(&mut u);
            let value = u.dot(&(&m * &u));
            if best.as_ref().map_or(true, |b| value < b.value) {
                best = Some(SphereMin { value, u });
            }
        }
        return best;
    }
    let mr = linalg::symmetrize(&(hyper.transpose() * &m * &hyper));
    let y = dual_solve(&mr, &cr);
    let mut u = &hyper * y;
    u /= u.norm();
    linalg::fix_sign(&mut u);
    let value = u.dot(&(&m * &u));
    Some(SphereMin { value, u })
}

/// `φ(μ) = λ_min(M - μC)` and the supergradient `-yᵀCy` at an eigenvector.
fn phi(m: &DMatrix<f64>, c: &DMatrix<f64>, mu: f64) -> (f64, f64) {
    let (val, y) = linalg::min_eig(&(m - c * mu));
    (val, -y.dot(&(c * &y)))
}

/// Maximizes the concave `φ` and recovers a feasible primal point from the
/// bottom eigenspace at the optimum.
fn dual_solve(m: &DMatrix<f64>, c: &DMatrix<f64>) -> DVector<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    let scale = m.amax().max(1e-300) / c.amax();
    lo *= scale.max(1.0);
    hi *= scale.max(1.0);
    while phi(m, c, lo).1 < 0.0 {
        lo *= 2.0;
    }
    while phi(m, c, hi).1 > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
        if phi(m, c, mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let (vals, vecs) = eig_sorted(&(m - c * mu));
    let band = 1e-7 * (1.0 + m.amax() + mu.abs() * c.amax());
    let k = vals.iter().take_while(|&&v| v <= vals[0] + band).count().max(1);
    let e = vecs.columns(0, k).into_owned();
    let ce = linalg::symmetrize(&(e.transpose() * c * &e));
    let (cv, cvec) = eig_sorted(&ce);
    let y = if k == 1 || cv[0] >= 0.0 || cv[k - 1] <= 0.0 {
        // Pick the eigenvector closest to the constraint.
        let i = if cv[0].abs() < cv[k - 1].abs() { 0 } else { k - 1 };
        cvec.column(i).into_owned()
    } else {
        let (c1, c2) = (cv[0], cv[k - 1]);
        cvec.column(0) * c2.sqrt() + cvec.column(k - 1) * (-c1).sqrt()
    };
    let y = &e * y;
    &y / y.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(m: &DMatrix<f64>, u: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += u[i] * m[(i, j)] * u[j];
            }
        }
        s
    }

    // Sphere grid keeping points within a band of the quadratic constraint.
    fn brute_sphere(m: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        let steps = 600;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let th = std::f64::consts::PI * i as f64 / steps as f64;
            for j in 0..(2 * steps) {
                let ph = std::f64::consts::PI * j as f64 / steps as f64;
                let u = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                if quad(c, &u).abs() < 1e-2 {
                    best = best.min(quad(m, &u));
                }
            }
        }
        best
    }

    // Circle in the plane ⟨a,u⟩ = 0, roots of the quadratic constraint by bisection.
    fn brute_circle(m: &DMatrix<f64>, a: &[f64; 3], c: &DMatrix<f64>) -> f64 {
        let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let a = [a[0] / na, a[1] / na, a[2] / na];
        let seed = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let d = seed[0] * a[0] + seed[1] * a[1] + seed[2] * a[2];
        let mut p = [seed[0] - d * a[0], seed[1] - d * a[1], seed[2] - d * a[2]];
        let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        p = [p[0] / np, p[1] / np, p[2] / np];
        let q = [a[1] * p[2] - a[2] * p[1], a[2] * p[0] - a[0] * p[2], a[0] * p[1] - a[1] * p[0]];
        let at = |t: f64| [p[0] * t.cos() + q[0] * t.sin(), p[1] * t.cos() + q[1] * t.sin(), p[2] * t.cos() + q[2] * t.sin()];
        let steps = 10_000;
        let mut best = f64::INFINITY;
        for i in 0..steps {
            let (mut lo, mut hi) = (std::f64::consts::TAU * i as f64 / steps as f64, std::f64::consts::TAU * (i + 1) as f64 / steps as f64);
            let (flo, fhi) = (quad(c, &at(lo)), quad(c, &at(hi)));
            if flo * fhi > 0.0 {
                continue;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if quad(c, &at(mid)) * quad(c, &at(lo)) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.min(quad(m, &at(lo)));
        }
        best
    }

    #[test]
    fn unconstrained_is_min_eig() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = minimize(&m, &[], None).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lorentz_boundary_constraint() {
        // u0² = u1² + u2² on the sphere.
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 1.0, 2.0]));
        let c = DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, 1.0, 1.0]));
        let r = minimize(&m, &[], Some(&c)).unwrap();
        // u0² = 1/2, rest on u1: value (3 + 1)/2.
        assert!((r.value - 2.0).abs() < 1e-9);
        assert!(r.u.dot(&(&c * &r.u)).abs() < 1e-8);
        let b = brute_sphere(&m, &c);
        assert!(r.value <= b + 1e-9 && b - r.value < 2e-2);
    }

    #[test]
    fn hyperplane_and_cone() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, -0.5, 0.1, -0.2, 0.1, 0.7]);
        let c = DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, 1.0, 1.0]));
        let a = DVector::from_column_slice(&[0.2, 1.0, -0.4]);
        let r = minimize(&m, &[a.clone()], Some(&c)).unwrap();
        assert!(a.dot(&r.u).abs() < 1e-12);
        assert!(r.u.dot(&(&c * &r.u)).abs() < 1e-9);
        let b = brute_circle(&m, &[0.2, 1.0, -0.4], &c);
        assert!((r.value - b).abs() < 1e-9, "{} vs {}", r.value, b);
    }

    #[test]
    fn definite_constraint_is_empty() {
        let m = DMatrix::identity(3, 3);
        let c = DMatrix::identity(3, 3);
        assert!(minimize(&m, &[], Some(&c)).is_none());
        let a = DVector::from_column_slice(&[1.0]);
        assert!(minimize(&DMatrix::identity(1, 1), &[a], None).is_none());
    }

    #[test]
    fn semidefinite_constraint_uses_kernel() {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[5.0, 4.0, -1.0]));
        let c = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 0.0, 2.0]));
        let r = minimize(&m, &[], Some(&c)).unwrap();
        assert!((r.value - 4.0).abs() < 1e-12);
    }
}
