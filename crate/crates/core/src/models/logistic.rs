//! Logistic-regression null: X_i | Z_i ~ Bernoulli(σ(Z_iᵀθ)), θ ~ N(0, I_d).
//!
//! Posterior: independence Metropolis–Hastings with the Laplace proposal
//! N(θ̂, H⁻¹). Marginal: Laplace approximation, refitted for every candidate
//! x. Copies: exact Bernoulli Gibbs updates under ĝ_π.

use nalgebra::{DMatrix, DVector};

use crate::acss::{log_copy_target, CopySet, DataShape, ModelPlugin, PosteriorDraws};
use crate::error::{Error, Result};
use crate::mcmc::{self, ChainConfig, CoordinateSweep, CoordinateUpdater, FnKernel, Move};
use crate::numerics::dist::{bernoulli, MultivariateNormal};
use crate::numerics::optim::{newton_maximize, OptimOptions, OptimResult};
use crate::numerics::special::{ln_2pi, sigmoid, softplus};
use crate::numerics::laplace_log_integral;
use crate::rng::Rng;

/// Independence-sampler acceptance below this triggers a warning.
pub const ACCEPTANCE_HEALTH: f64 = 0.5;

const MODE_OPTIONS: OptimOptions = OptimOptions {
    grad_tol: 1e-10,
    max_iter: 200,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub theta: DVector<f64>,
}

/// Observed binary responses with fixed covariates Z and, optionally, the
/// outcome y used only by the conditional-independence statistic.
#[derive(Debug, Clone)]
pub struct LogisticData {
    pub x: Vec<u8>,
    pub z: DMatrix<f64>,
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LogisticModel {
    z: DMatrix<f64>,
}

impl LogisticModel {
    pub fn new(z: DMatrix<f64>) -> Self {
        Self { z }
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    fn check(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::InvalidParameter(format!(
                "x has length {}, covariates have {} rows",
                x.len(),
                self.n()
            )));
        }
        if x.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("x entries must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Ψ(θ; x) = log f_θ(x) + log π(θ).
    pub fn log_posterior(&self, theta: &[f64], x: &[u8]) -> f64 {
        let th = DVector::from_column_slice(theta);
        let eta = &self.z * &th;
        let ll: f64 = eta.iter().zip(x).map(|(e, &xi)| xi as f64 * e - softplus(*e)).sum();
        ll - 0.5 * th.norm_squared() - 0.5 * self.d() as f64 * ln_2pi()
    }

    /// (Ψ, ∇Ψ, ∇²Ψ) with ∇²Ψ = −(Σ p_i(1−p_i) Z_i Z_iᵀ + I).
    pub fn log_posterior_derivatives(&self, theta: &[f64], x: &[u8]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let th = DVector::from_column_slice(theta);
        let eta = &self.z * &th;
        let mut ll = 0.0;
        let mut resid = DVector::zeros(self.n());
        let mut w = DVector::zeros(self.n());
        for i in 0..self.n() {
            let p = sigmoid(eta[i]);
            ll += x[i] as f64 * eta[i] - softplus(eta[i]);
            resid[i] = x[i] as f64 - p;
            w[i] = p * (1.0 - p);
        }
        let value = ll - 0.5 * th.norm_squared() - 0.5 * self.d() as f64 * ln_2pi();
        let grad = self.z.transpose() * resid - &th;
        let hess = -self.closed_form_neg_hessian_from_weights(&w);
        (value, grad, hess)
    }

    fn closed_form_neg_hessian_from_weights(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d();
        let mut zw = self.z.clone();
        for (i, mut row) in zw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        self.z.transpose() * zw + DMatrix::identity(d, d)
    }

    /// H = Σ_i e^{Z_iᵀθ}/(1+e^{Z_iᵀθ})² Z_i Z_iᵀ + I_d.
    pub fn closed_form_neg_hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let eta = &self.z * DVector::from_column_slice(theta);
        let w = eta.map(|e| {
            let p = sigmoid(e);
            p * (1.0 - p)
        });
        self.closed_form_neg_hessian_from_weights(&w)
    }

    fn mode_from(&self, x: &[u8], start: &[f64]) -> Result<OptimResult> {
        let r = newton_maximize(
            |t| {
                let (v, g, h) = self.log_posterior_derivatives(t, x);
                Some((v, g.as_slice().to_vec(), h))
            },
            start,
            MODE_OPTIONS,
        )?;
        if !r.converged {
            log::warn!("logistic posterior mode search did not converge");
        }
        Ok(r)
    }

    /// Posterior mode θ̂ and the closed-form H at θ̂.
    pub fn posterior_mode_and_hessian(&self, x: &[u8]) -> Result<OptimResult> {
        self.check(x)?;
        let mut r = self.mode_from(x, &vec![0.0; self.d()])?;
        r.neg_hessian = self.closed_form_neg_hessian(&r.argmax);
        Ok(r)
    }

    fn laplace_from(&self, x: &[u8], start: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.mode_from(x, start)?;
        let h = self.closed_form_neg_hessian(&r.argmax);
        Ok((laplace_log_integral(r.value, &h, self.d())?, r.argmax))
    }

    /// Exact P(X_i = 1 | x₋ᵢ) under ĝ_π, by evaluating log_copy_target at
    /// both values of coordinate i.
    pub fn bernoulli_conditional(&self, x: &[u8], i: usize, draws: &PosteriorDraws<LogisticParams>) -> Result<f64> {
        let mut x1 = x.to_vec();
        x1[i] = 1;
        let mut x0 = x.to_vec();
        x0[i] = 0;
        let l1 = log_copy_target(self, &x1, draws)?;
        let l0 = log_copy_target(self, &x0, draws)?;
        Ok(sigmoid(l1 - l0))
    }
}

impl ModelPlugin for LogisticModel {
    type Params = LogisticParams;
    type Data = Vec<u8>;

    fn log_likelihood(&self, params: &LogisticParams, x: &Vec<u8>) -> f64 {
        let eta = &self.z * &params.theta;
        eta.iter().zip(x).map(|(e, &xi)| xi as f64 * e - softplus(*e)).sum()
    }

    fn log_prior(&self, params: &LogisticParams) -> f64 {
        -0.5 * params.theta.norm_squared() - 0.5 * self.d() as f64 * ln_2pi()
    }

    fn sample_posterior(
        &self,
        x: &Vec<u8>,
        count: usize,
        chain: &ChainConfig,
        rng: &mut Rng,
    ) -> Result<PosteriorDraws<LogisticParams>> {
        let mode = self.posterior_mode_and_hessian(x)?;
        let proposal = MultivariateNormal::from_precision(DVector::from_vec(mode.argmax.clone()), &mode.neg_hessian)?;
        let kernel = FnKernel {
            target: |t: &DVector<f64>| self.log_posterior(t.as_slice(), x),
            proposal: |_: &DVector<f64>, rng: &mut Rng| proposal.sample(rng),
            proposal_logpdf: |_: &DVector<f64>, to: &DVector<f64>| proposal.log_pdf(to),
        };
        let out = mcmc::mh_chain(&kernel, chain, DVector::from_vec(mode.argmax), count, rng)?;
        if out.acceptance_rate < ACCEPTANCE_HEALTH {
            log::warn!("logistic posterior acceptance {:.3} below {ACCEPTANCE_HEALTH}", out.acceptance_rate);
        }
        Ok(PosteriorDraws {
            draws: out.states.into_iter().map(|theta| LogisticParams { theta }).collect(),
            burn_in: chain.burn_in,
            thin: chain.thin,
            acceptance_rate: Some(out.acceptance_rate),
        })
    }

    fn log_marginal_hat(&self, x: &Vec<u8>) -> Result<f64> {
        self.check(x)?;
        Ok(self.laplace_from(x, &vec![0.0; self.d()])?.0)
    }

    fn sample_copies(
        &self,
        x: &Vec<u8>,
        draws: &PosteriorDraws<LogisticParams>,
        count: usize,
        rng: &mut Rng,
    ) -> Result<CopySet<Vec<u8>>> {
        self.check(x)?;
        // Σ_b log f_{θ̂_b} changes by Σ_b Z_iᵀθ̂_b when x_i goes 0 → 1.
        let mut eta_sum = DVector::zeros(self.n());
        for p in &draws.draws {
            eta_sum += &self.z * &p.theta;
        }
        let updater = BernoulliUpdater {
            model: self,
            eta_sum,
            b_minus_1: draws.len() as f64 - 1.0,
            current: None,
            warm: vec![0.0; self.d()],
        };
        let mut sweep = CoordinateSweep::new(updater);
        mcmc::permuted_serial_sampler(x, &mut sweep, count, rng)
    }

    fn data_shape(&self) -> DataShape {
        DataShape {
            dims: vec![self.n()],
            discrete: true,
        }
    }

    fn in_parameter_space(&self, params: &LogisticParams) -> bool {
        params.theta.len() == self.d() && params.theta.iter().all(|v| v.is_finite())
    }
}

struct BernoulliUpdater<'a> {
    model: &'a LogisticModel,
    eta_sum: DVector<f64>,
    b_minus_1: f64,
    /// Laplace marginal and mode at the current state.
    current: Option<(f64, Vec<f64>)>,
    warm: Vec<f64>,
}

impl CoordinateUpdater<Vec<u8>> for BernoulliUpdater<'_> {
    fn num_coordinates(&self, state: &Vec<u8>) -> usize {
        state.len()
    }

    fn prepare(&mut self, state: &Vec<u8>) -> Result<()> {
        if self.b_minus_1 > 0.0 {
            let (lm, mode) = self.model.laplace_from(state, &self.warm)?;
            self.warm = mode.clone();
            self.current = Some((lm, mode));
        }
        Ok(())
    }

    fn update(&mut self, state: &mut Vec<u8>, i: usize, rng: &mut Rng) -> Result<Move> {
        let mut logit = self.eta_sum[i];
        let mut flipped = None;
        if self.b_minus_1 > 0.0 {
            let (lm_cur, mode_cur) = self.current.as_ref().expect("prepared");
            state[i] ^= 1;
            let (lm_flip, mode_flip) = self.model.laplace_from(state, mode_cur)?;
            state[i] ^= 1;
            let (lm1, lm0) = if state[i] == 1 { (*lm_cur, lm_flip) } else { (lm_flip, *lm_cur) };
            logit -= self.b_minus_1 * (lm1 - lm0);
            flipped = Some((lm_flip, mode_flip));
        }
        let new = bernoulli(rng, sigmoid(logit)) as u8;
        if new != state[i] {
            state[i] = new;
            if let Some(f) = flipped {
                self.warm = f.1.clone();
                self.current = Some(f);
            }
        }
        Ok(Move::Exact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::optim::fd_hessian;
    use crate::rng::seeded;
    use crate::numerics::dist::std_normal;

    fn random_instance(n: usize, d: usize, seed: u64) -> (LogisticModel, Vec<u8>) {
        let mut rng = seeded(seed);
        let z = DMatrix::from_fn(n, d, |_, _| std_normal(&mut rng));
        let x = (0..n).map(|_| bernoulli(&mut rng, 0.5) as u8).collect();
        (LogisticModel::new(z), x)
    }

    #[test]
    fn likelihood_at_zero() {
        let (m, x) = random_instance(7, 3, 1);
        let p = LogisticParams { theta: DVector::zeros(3) };
        assert!((m.log_likelihood(&p, &x) + 7.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_matches_direct_product() {
        let (m, x) = random_instance(6, 2, 2);
        let theta = DVector::from_vec(vec![0.7, -1.3]);
        let mut prod = 1.0;
        for i in 0..6 {
            let e = (m.z.row(i) * &theta)[0];
            let p = e.exp() / (1.0 + e.exp());
            prod *= if x[i] == 1 { p } else { 1.0 - p };
        }
        let ll = m.log_likelihood(&LogisticParams { theta }, &x);
        assert!((ll - prod.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_design_mode_and_marginal() {
        let m = LogisticModel::new(DMatrix::zeros(5, 3));
        let x = vec![1, 0, 1, 1, 0];
        let r = m.posterior_mode_and_hessian(&x).unwrap();
        assert!(r.argmax.iter().all(|v| v.abs() < 1e-12));
        assert!((&r.neg_hessian - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
        assert!((m.log_marginal_hat(&x).unwrap() + 5.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn closed_form_hessian_matches_finite_differences() {
        for seed in 0..10 {
            let (m, x) = random_instance(30, 4, 100 + seed);
            let r = m.posterior_mode_and_hessian(&x).unwrap();
            let fd = -fd_hessian(&|t: &[f64]| m.log_posterior(t, &x), &r.argmax);
            assert!((&r.neg_hessian - fd).abs().max() <= 1e-4);
        }
    }

    #[test]
    fn two_point_mode_matches_grid() {
        let m = LogisticModel::new(DMatrix::from_column_slice(2, 1, &[1.0, -1.0]));
        let x = vec![1, 0];
        let r = m.posterior_mode_and_hessian(&x).unwrap();
        let best = (0..=60_000)
            .map(|k| -3.0 + k as f64 * 1e-4)
            .max_by(|a, b| m.log_posterior(&[*a], &x).partial_cmp(&m.log_posterior(&[*b], &x)).unwrap())
            .unwrap();
        assert!((r.argmax[0] - best).abs() < 1e-3);
    }

    #[test]
    fn duplicated_data_lowers_marginal() {
        let (m, x) = random_instance(20, 2, 5);
        let z2 = DMatrix::from_fn(40, 2, |i, j| m.z[(i % 20, j)]);
        let m2 = LogisticModel::new(z2);
        let x2: Vec<u8> = x.iter().chain(x.iter()).cloned().collect();
        assert!(m2.log_marginal_hat(&x2).unwrap() < m.log_marginal_hat(&x).unwrap());
    }

    #[test]
    fn fast_conditional_matches_log_copy_target() {
        let (m, x) = random_instance(12, 2, 9);
        let mut rng = seeded(10);
        let draws = m.sample_posterior(&x, 4, &ChainConfig::new(50, 2).unwrap(), &mut rng).unwrap();
        let mut eta_sum = DVector::zeros(12);
        for p in &draws.draws {
            eta_sum += &m.z * &p.theta;
        }
        let mut up = BernoulliUpdater {
            model: &m,
            eta_sum,
            b_minus_1: 3.0,
            current: None,
            warm: vec![0.0; 2],
        };
        let mut state = x.clone();
        up.prepare(&state).unwrap();
        for i in 0..12 {
            let p_slow = m.bernoulli_conditional(&state, i, &draws).unwrap();
            // replay the update with a fixed uniform to recover the probability
            let before = state.clone();
            let mut probe = seeded(1000 + i as u64);
            let u: f64 = { use rand::Rng as _; probe.random() };
            let mut probe = seeded(1000 + i as u64);
            up.update(&mut state, i, &mut probe).unwrap();
            assert_eq!(state[i] == 1, u < p_slow, "coordinate {i}: p={p_slow} u={u}");
            for j in 0..12 {
                if j != i {
                    assert_eq!(state[j], before[j]);
                }
            }
        }
    }
}
