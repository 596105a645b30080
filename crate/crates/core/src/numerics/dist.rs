//! Sampling and log densities for the distributions used by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::linalg::{chol_logdet, cholesky};
use super::special::{
    ln_beta, ln_gamma, log_norm_interval, log_sum_exp, norm_cdf, norm_quantile, LN_SQRT_2PI,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

fn invalid(msg: &str) -> Error {
    Error::InvalidParameter(msg.to_string())
}

pub fn std_normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * std_normal(rng)
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

pub fn uniform(rng: &mut Rng, a: f64, b: f64) -> f64 {
    a + (b - a) * rng.random::<f64>()
}

pub fn uniform_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if x < a || x > b {
        f64::NEG_INFINITY
    } else {
        -(b - a).ln()
    }
}

pub fn bernoulli(rng: &mut Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

pub fn bernoulli_logpmf(x: bool, p: f64) -> f64 {
    if x {
        p.ln()
    } else {
        (-p).ln_1p()
    }
}

pub fn chi2_1_logpdf(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -0.5 * x.ln() - 0.5 * x - LN_SQRT_2PI
}

pub fn chi2_1(rng: &mut Rng) -> f64 {
    let z = std_normal(rng);
    z * z
}

pub fn beta(rng: &mut Rng, a: f64, b: f64) -> Result<f64> {
    let d = rand_distr::Beta::new(a, b).map_err(|_| invalid("beta shape parameters must be positive"))?;
    Ok(d.sample(rng))
}

pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Inverse-Gamma with the given shape and scale (density ∝ x^{−shape−1} e^{−scale/x}).
pub fn inv_gamma(rng: &mut Rng, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(invalid("inverse-gamma shape and scale must be positive"));
    }
    let g = Gamma::new(shape, 1.0 / scale).map_err(|_| invalid("gamma parameters"))?;
    Ok(1.0 / g.sample(rng))
}

pub fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Normalized probabilities from unnormalized log weights.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let m = log_sum_exp(log_weights);
    log_weights.iter().map(|w| (w - m).exp()).collect()
}

/// Draw an index with probability proportional to exp(log_weights).
pub fn categorical_log(rng: &mut Rng, log_weights: &[f64]) -> Result<usize> {
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(invalid("categorical weights are all zero or non-finite"));
    }
    let w: Vec<f64> = log_weights.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return Ok(i);
        }
        u -= wi;
    }
    Ok(w.iter().rposition(|&x| x > 0.0).unwrap())
}

/// N(μ, σ²) restricted to [a, b]; endpoints may be infinite.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, var: f64, a: f64, b: f64) -> Result<Self> {
        if !(var > 0.0) || !(a < b) || !mu.is_finite() {
            return Err(invalid("truncated normal needs var > 0 and a < b"));
        }
        Ok(Self {
            mu,
            sigma: var.sqrt(),
            a,
            b,
        })
    }

    fn bounds(&self) -> (f64, f64) {
        ((self.a - self.mu) / self.sigma, (self.b - self.mu) / self.sigma)
    }

    /// log of the untruncated mass of [a, b].
    pub fn log_mass(&self) -> f64 {
        let (alpha, beta) = self.bounds();
        log_norm_interval(alpha, beta)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.a || x > self.b {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln() - self.log_mass()
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let (alpha, beta) = self.bounds();
        let z = if alpha > 6.0 {
            tail_exponential(rng, alpha, beta)
        } else if beta < -6.0 {
            -tail_exponential(rng, -beta, -alpha)
        } else if alpha > 0.0 {
            let (pa, pb) = (norm_cdf(-alpha), norm_cdf(-beta));
            -norm_quantile(pb + rng.random::<f64>() * (pa - pb))
        } else {
            let (pa, pb) = (norm_cdf(alpha), norm_cdf(beta));
            norm_quantile(pa + rng.random::<f64>() * (pb - pa))
        };
        (self.mu + self.sigma * z.clamp(alpha, beta)).clamp(self.a, self.b)
    }
}

/// Standard normal restricted to [alpha, beta] with alpha > 0 far in the tail:
/// rejection from a shifted exponential truncated to the interval.
fn tail_exponential(rng: &mut Rng, alpha: f64, beta: f64) -> f64 {
    let lambda = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
    let width = beta - alpha;
    let cap = if width.is_finite() { -(-lambda * width).exp_m1() } else { 1.0 };
    loop {
        let u: f64 = rng.random();
        let z = alpha - (-u * cap).ln_1p() / lambda;
        let d = z - lambda;
        if rng.random::<f64>().ln() <= -0.5 * d * d && z <= beta {
            return z;
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    /// Σ = L Lᵀ
    Covariance(Cholesky<f64, Dyn>),
    /// Σ⁻¹ = L Lᵀ
    Precision(Cholesky<f64, Dyn>),
}

#[derive(Debug, Clone)]
pub struct MultivariateNormal {
    pub mean: DVector<f64>,
    factor: Factor,
}

impl MultivariateNormal {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(invalid("mean and covariance dimensions differ"));
        }
        Ok(Self {
            mean,
            factor: Factor::Covariance(cholesky(cov)?),
        })
    }

    pub fn from_precision(mean: DVector<f64>, precision: &DMatrix<f64>) -> Result<Self> {
        if precision.nrows() != mean.len() {
            return Err(invalid("mean and precision dimensions differ"));
        }
        Ok(Self {
            mean,
            factor: Factor::Precision(cholesky(precision)?),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| std_normal(rng));
        match &self.factor {
            Factor::Covariance(c) => &self.mean + c.l_dirty().lower_triangle() * z,
            Factor::Precision(c) => {
                let lt = c.l_dirty().lower_triangle().transpose();
                let w = lt.solve_upper_triangular(&z).expect("triangular factor is nonsingular");
                &self.mean + w
            }
        }
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let k = self.dim() as f64;
        let (quad, half_logdet_cov) = match &self.factor {
            Factor::Covariance(c) => {
                let l = c.l_dirty().lower_triangle();
                let w = l.solve_lower_triangular(&d).expect("triangular factor is nonsingular");
                (w.norm_squared(), 0.5 * chol_logdet(c))
            }
            Factor::Precision(c) => {
                let l = c.l_dirty().lower_triangle();
                let w = l.transpose() * &d;
                (w.norm_squared(), -0.5 * chol_logdet(c))
            }
        };
        -0.5 * quad - half_logdet_cov - k * LN_SQRT_2PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn untruncated_normal_moments() {
        let mut rng = seeded(1);
        let tn = TruncatedNormal::new(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| tn.sample(&mut rng)).collect();
        let (m, v) = moments(&xs);
        let se = (1.0 / 1e5_f64).sqrt();
        assert!(m.abs() < 3.0 * se, "mean {m}");
        assert!((v - 1.0).abs() < 4.0 * (2.0 / 1e5_f64).sqrt(), "var {v}");
    }

    #[test]
    fn half_normal_mean() {
        let mut rng = seeded(2);
        let tn = TruncatedNormal::new(0.0, 1.0, 0.0, f64::INFINITY).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| tn.sample(&mut rng)).collect();
        let (m, _) = moments(&xs);
        let target = (2.0 / std::f64::consts::PI).sqrt();
        let sd = (1.0 - 2.0 / std::f64::consts::PI).sqrt();
        assert!((m - target).abs() < 3.0 * sd / 1e5_f64.sqrt(), "mean {m}");
    }

    #[test]
    fn deep_tail_truncation_matches_mills_ratio() {
        // E[Z | Z > a] = φ(a)/Φc(a) for large a
        let mut rng = seeded(3);
        let a = 9.0;
        let tn = TruncatedNormal::new(0.0, 1.0, a, f64::INFINITY).unwrap();
        let xs: Vec<f64> = (0..50_000).map(|_| tn.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x >= a));
        let (m, v) = moments(&xs);
        let mills = (-0.5 * a * a - LN_SQRT_2PI - crate::numerics::special::log_norm_cdf(-a)).exp();
        assert!((m - mills).abs() < 4.0 * v.sqrt() / 50_000f64.sqrt(), "{m} vs {mills}");
        let narrow = TruncatedNormal::new(0.0, 1.0, -20.01, -20.0).unwrap();
        for _ in 0..100 {
            let x = narrow.sample(&mut rng);
            assert!((-20.01..=-20.0).contains(&x));
        }
    }

    #[test]
    fn inverse_gamma_logpdf_direct() {
        let direct = -ln_gamma(1.0) + 0.5_f64.ln() - 2.0 * 0.5_f64.ln() - 0.5 / 0.5;
        assert!((inv_gamma_logpdf(0.5, 1.0, 0.5) - direct).abs() < 1e-14);
    }

    #[test]
    fn inverse_gamma_and_beta_moments() {
        let mut rng = seeded(4);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| inv_gamma(&mut rng, 5.0, 2.0).unwrap()).collect();
        let (m, v) = moments(&xs);
        // mean b/(a−1), var b²/((a−1)²(a−2))
        assert!((m - 0.5).abs() < 4.0 * (v / n as f64).sqrt());
        assert!((v - 1.0 / 12.0).abs() < 0.01);
        let ys: Vec<f64> = (0..n).map(|_| beta(&mut rng, 5.0, 9.0).unwrap()).collect();
        let (m, v) = moments(&ys);
        assert!((m - 5.0 / 14.0).abs() < 4.0 * (v / n as f64).sqrt());
    }

    #[test]
    fn invalid_parameters_error() {
        assert!(TruncatedNormal::new(0.0, -1.0, 0.0, 1.0).is_err());
        assert!(TruncatedNormal::new(0.0, 1.0, 1.0, 1.0).is_err());
        let mut rng = seeded(5);
        assert!(inv_gamma(&mut rng, 0.0, 1.0).is_err());
        assert!(beta(&mut rng, -1.0, 1.0).is_err());
        assert!(categorical_log(&mut rng, &[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn mvn_covariance_and_precision_agree() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let a = MultivariateNormal::new(mean.clone(), &cov).unwrap();
        let b = MultivariateNormal::from_precision(mean.clone(), &cov.clone().try_inverse().unwrap()).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.2]);
        assert!((a.log_pdf(&x) - b.log_pdf(&x)).abs() < 1e-12);
        let mut rng = seeded(6);
        let n = 100_000;
        let mut s = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let d = b.sample(&mut rng) - &mean;
            s += &d * d.transpose();
        }
        s /= n as f64;
        assert!((s - cov).abs().max() < 0.05);
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = seeded(7);
        let lw = [0.0, 2.0_f64.ln(), f64::NEG_INFINITY, 1e-300_f64.ln()];
        let mut counts = [0usize; 4];
        for _ in 0..30_000 {
            counts[categorical_log(&mut rng, &lw).unwrap()] += 1;
        }
        assert_eq!(counts[2], 0);
        let p1 = counts[1] as f64 / 30_000.0;
        assert!((p1 - 2.0 / 3.0).abs() < 4.0 * (2.0 / 9.0 / 30_000.0_f64).sqrt());
    }
}
