//! Small dense helpers on top of nalgebra: rank, null spaces, least squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// SVD of `a` padded with zero rows so that the full right singular basis is available.
fn padded_svd(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (r, c) = a.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.rows_mut(0, r).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    (svd.singular_values, vt.transpose())
}

fn cutoff(sv: &DVector<f64>, rel: f64) -> f64 {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    rel * smax.max(1.0)
}

/// Numerical rank with singular values compared against `rel * max(σ_max, 1)`.
pub fn rank(a: &DMatrix<f64>, rel: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let (sv, _) = padded_svd(a);
    let tol = cutoff(&sv, rel);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis (columns) of `ker a`, canonicalized so that it does not
/// depend on the rotation chosen by the SVD.
pub fn null_space(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let (sv, v) = padded_svd(a);
    let tol = cutoff(&sv, rel);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| sv[i] <= tol)
        .map(|i| v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    canonical_basis(&DMatrix::from_columns(&cols))
}

/// Given orthonormal columns `b`, returns an orthonormal basis of the same span
/// obtained by Gram–Schmidt on the projected unit vectors `e_1, e_2, …`.
pub fn canonical_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = b.shape();
    if k == 0 {
        return b.clone();
    }
    let proj = b * b.transpose();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(k);
    // Pick the coordinate directions with the largest residual first so that
    // near-degenerate projections never enter the basis.
    while out.len() < k {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..n {
            let mut v = proj.column(i).into_owned();
            for q in &out {
                let c = q.dot(&v);
                v -= q * c;
            }
            let nv = v.norm();
            if best.as_ref().map_or(true, |(bn, _)| nv > *bn + 1e-12) {
                best = Some((nv, v));
            }
        }
        let (nv, v) = best.expect("nonempty");
        if nv < 1e-12 {
            break;
        }
        let mut v = v / nv;
        // Reorthogonalize once for stability.
        for q in &out {
            let c = q.dot(&v);
            v -= q * c;
        }
        let nv = v.norm();
        out.push(v / nv);
    }
    DMatrix::from_columns(&out)
}

/// Orthonormal basis of the orthogonal complement of the columns of `a` inside `R^n`.
pub fn orth_complement(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    null_space(&a.transpose(), rel)
}

/// Orthonormal basis of `range(a)`.
pub fn range_basis(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let comp = orth_complement(a, rel);
    let n = a.nrows();
    let proj = DMatrix::identity(n, n) - &comp * comp.transpose();
    let k = n - comp.ncols();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let sym = SymmetricEigen::new(proj);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| sym.eigenvalues[i] > 0.5)
        .map(|i| sym.eigenvectors.column(i).into_owned())
        .collect();
    canonical_basis(&DMatrix::from_columns(&cols))
}

/// Minimum-norm least-squares solution of `a x = b` and its residual norm.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel: f64) -> (DVector<f64>, f64) {
    let (r, c) = a.shape();
    if c == 0 {
        return (DVector::zeros(0), b.norm());
    }
    if r == 0 {
        return (DVector::zeros(c), 0.0);
    }
    let svd = a.clone().svd(true, true);
    let tol = cutoff(&svd.singular_values, rel);
    let x = svd.solve(b, tol).expect("both factors computed");
    let res = (a * &x - b).norm();
    (x, res)
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn min_eig(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sym = SymmetricEigen::new(a.clone());
    let mut idx = 0;
    for i in 1..sym.eigenvalues.len() {
        if sym.eigenvalues[i] < sym.eigenvalues[idx] {
            idx = i;
        }
    }
    (sym.eigenvalues[idx], sym.eigenvectors.column(idx).into_owned())
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Deterministic sign: first entry of largest magnitude made positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut idx = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[idx].abs() + 1e-12 {
            idx = i;
        }
    }
    if !v.is_empty() && v[idx] < 0.0 {
        v.neg_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_canonical() {
        let j = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let k = null_space(&j, 1e-8);
        assert_eq!(k.ncols(), 2);
        assert!((k.column(0) - DVector::from_column_slice(&[1.0, 0.0, 0.0])).norm() < 1e-14);
        assert!((k.column(1) - DVector::from_column_slice(&[0.0, 1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn wide_matrix_null_space() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = null_space(&a, 1e-8);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-14);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn lstsq_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (x, r) = lstsq(&a, &DVector::from_column_slice(&[2.0]), 1e-12);
        assert!(r < 1e-14);
        assert!((x - DVector::from_column_slice(&[1.0, 1.0])).norm() < 1e-14);
        assert_eq!(rank(&a, 1e-8), 1);
        assert_eq!(rank(&DMatrix::zeros(2, 2), 1e-8), 0);
    }
}
