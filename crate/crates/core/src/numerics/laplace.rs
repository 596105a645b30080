use nalgebra::DMatrix;

use super::linalg::{chol_logdet, cholesky};
use super::special::ln_2pi;
use crate::error::{Error, Result};

/// log ∫ exp Ψ ≈ Ψ(θ̂) + (d/2) log 2π − ½ log det H.
///
/// If H fails its Cholesky factorization, a jitter of 1e-8·tr(H)/d is added
/// once before giving up.
pub fn laplace_log_integral(mode_value: f64, neg_hessian: &DMatrix<f64>, dim: usize) -> Result<f64> {
    if neg_hessian.nrows() != dim || neg_hessian.ncols() != dim {
        return Err(Error::InvalidParameter("Hessian shape does not match dimension".into()));
    }
    let logdet = match cholesky(neg_hessian) {
        Ok(c) => chol_logdet(&c),
        Err(_) => {
            let jitter = 1e-8 * neg_hessian.trace() / dim as f64;
            if !(jitter > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let repaired = neg_hessian + DMatrix::<f64>::identity(dim, dim) * jitter;
            log::warn!("Laplace Hessian repaired with jitter {jitter:.3e}");
            chol_logdet(&cholesky(&repaired)?)
        }
    };
    Ok(mode_value + 0.5 * dim as f64 * ln_2pi() - 0.5 * logdet)
}
