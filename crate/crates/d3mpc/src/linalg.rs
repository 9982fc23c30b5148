//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-norm least-squares solution of `a x = b` via SVD (pseudoinverse
/// semantics). Singular values below `rel_tol * sigma_max` are treated as
/// zero. Returns the solution together with the residual two-norm.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, f64) {
    assert_eq!(a.nrows(), b.len(), "lstsq: row mismatch");
    if a.nrows() == 0 {
        return (DVector::zeros(a.ncols()), 0.0);
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let ub = u.transpose() * b;
    let mut scaled = ub;
    for (i, s) in svd.singular_values.iter().enumerate() {
        scaled[i] = if *s > cutoff { scaled[i] / s } else { 0.0 };
    }
    let x = vt.transpose() * scaled;
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Numerical rank: count of singular values above `rel_tol * sigma_max`.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * sigma_max).count()
}

/// Symmetric part of a matrix.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = symmetrize(a).symmetric_eigenvalues();
    let mut v: Vec<f64> = ev.iter().cloned().collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for (i, x) in v.into_iter().enumerate() {
        ev[i] = x;
    }
    ev
}

/// Upper-triangular Cholesky factor `U` with `U^T U = a`. Errors if `a` is
/// not positive definite.
pub fn chol_upper(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(symmetrize(a))
        .ok_or_else(|| Error::Parameter(format!("{what} is not positive definite")))?;
    Ok(chol.l().transpose())
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(a).symmetric_eigen();
    let mut d = eig.eigenvalues.clone();
    for x in d.iter_mut() {
        *x = x.max(0.0).sqrt();
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Largest generalized eigenvalue of `d v = lambda p v` with `p` positive
/// definite, computed as `lambda_max(Lp^-T d Lp^-1)` from `p = Lp^T Lp`.
pub fn gen_eig_max(d: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let u = chol_upper(p, "generalized-eigenvalue weight")?;
    let u_inv = u
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Parameter("singular Cholesky factor".into()))?;
    let m = symmetrize(&(u_inv.transpose() * d * &u_inv));
    let ev = sym_eigenvalues(&m);
    Ok(ev[ev.len() - 1])
}

/// Weighted norm `sqrt(v' w v)`.
pub fn weighted_norm(v: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    (v.dot(&(w * v))).max(0.0).sqrt()
}
