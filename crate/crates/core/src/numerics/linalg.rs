//! Thin wrappers over nalgebra's dense factorizations with crate errors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)
}

/// log det of a positive definite matrix via its Cholesky factor.
pub fn logdet_pd(m: &DMatrix<f64>) -> Result<f64> {
    let c = cholesky(m)?;
    Ok(chol_logdet(&c))
}

pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn solve_pd(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(cholesky(m)?.solve(b))
}

/// General square solve by LU; singular matrices are an error.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() != m.ncols() || m.nrows() != b.len() {
        return Err(Error::InvalidParameter("solve: dimension mismatch".into()));
    }
    m.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("LU solve".into()))
}

/// Eigenvalues of a symmetric matrix, in descending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// Symmetric eigendecomposition with eigenpairs in descending eigenvalue order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[b].partial_cmp(&e.eigenvalues[a]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Leading singular triple (σ₁, u₁, v₁).
pub fn leading_singular_pair(m: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let svd = m.clone().svd(true, true);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > best {
            best = s;
            arg = i;
        }
    }
    let u = svd.u.as_ref().unwrap().column(arg).into_owned();
    let v = svd.v_t.as_ref().unwrap().row(arg).transpose();
    (best, u, v)
}

/// Least squares min ‖Aβ − b‖ for full column rank A; returns (β, RSS).
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if a.nrows() != b.len() || a.nrows() < a.ncols() {
        return Err(Error::InvalidParameter("least squares: bad shape".into()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= smax * 1e-12 * a.nrows() as f64 {
        return Err(Error::Singular("least squares design is rank deficient".into()));
    }
    let beta = svd
        .solve(b, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let r = b - a * &beta;
    Ok((beta, r.norm_squared()))
}
