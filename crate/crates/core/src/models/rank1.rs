//! Rank-1 signal plus N(0, 0.25) noise: X = u vᵀ + W with u, v ~ N(0, I_n).
//!
//! The marginal integrates u out exactly and Laplace-approximates the rest
//! in t_i = log W_i, where W_i ~ χ²₁ stands for the squared rotated v_i. It
//! depends on x only through its singular values.

use nalgebra::{DMatrix, DVector};

use crate::acss::{CopySet, DataShape, ModelPlugin, PosteriorDraws};
use crate::error::{Error, Result};
use crate::mcmc::{self, ChainConfig, CoordinateSweep, CoordinateUpdater, Move};
use crate::numerics::dist::{normal, normal_logpdf, std_normal};
use crate::numerics::laplace_log_integral;
use crate::numerics::linalg::{leading_singular_pair, singular_values};
use crate::numerics::optim::{maximize_1d, newton_maximize, OptimOptions};
use crate::numerics::special::ln_2pi;
use crate::rng::{label, substream, Rng};

/// Fixed noise variance.
pub const NOISE_VAR: f64 = 0.25;
/// Mean copy acceptance below this triggers a warning.
pub const ACCEPTANCE_HEALTH: f64 = 0.9;
/// Random restarts when the t-optimization fails to settle.
pub const RESTARTS: usize = 5;

const MODE_OPTIONS: OptimOptions = OptimOptions {
    grad_tol: 1e-10,
    max_iter: 200,
};
const RESTART_GRAD_TOL: f64 = 1e-4;
const ENTRY_FD_STEP: f64 = 1e-3;
const ENTRY_SEARCH_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Params {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl Rank1Params {
    pub fn signal(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
}

pub type Rank1Data = DMatrix<f64>;

/// Ψ(t; x) from the singular values d of x, with the χ²₁ prior constants
/// and const(x) = (n²/2)log 4 − (n²/2)log 2π − 2‖x‖²_F included.
pub fn reparam_log_posterior_value(t: &[f64], d: &[f64]) -> f64 {
    let n = d.len() as f64;
    let e: Vec<f64> = t.iter().map(|v| v.exp()).collect();
    let s1: f64 = e.iter().sum();
    let sd: f64 = e.iter().zip(d).map(|(e, d)| e * d * d).sum();
    let frob: f64 = d.iter().map(|d| d * d).sum();
    let c = 1.0 + 4.0 * s1;
    let prior: f64 = t.iter().zip(&e).map(|(t, e)| 0.5 * t - 0.5 * e).sum::<f64>() - 0.5 * n * ln_2pi();
    let cst = 0.5 * n * n * 4f64.ln() - 0.5 * n * n * ln_2pi() - 2.0 * frob;
    -0.5 * n * c.ln() + 8.0 * sd / c + prior + cst
}

/// ∂Ψ/∂t_j = ½ − ½e^{t_j} − (2n/c)e^{t_j} + (8e^{t_j}/c²)(c d_j² − 4S_d).
pub fn reparam_gradient(t: &[f64], d: &[f64]) -> DVector<f64> {
    let n = d.len() as f64;
    let e: Vec<f64> = t.iter().map(|v| v.exp()).collect();
    let s1: f64 = e.iter().sum();
    let sd: f64 = e.iter().zip(d).map(|(e, d)| e * d * d).sum();
    let c = 1.0 + 4.0 * s1;
    DVector::from_fn(t.len(), |j, _| {
        0.5 - 0.5 * e[j] - 2.0 * n / c * e[j] + 8.0 * e[j] / (c * c) * (c * d[j] * d[j] - 4.0 * sd)
    })
}

/// H(t; x) = −∇²Ψ, entry by entry as displayed with N_j = c d_j² − 4S_d.
pub fn reparam_neg_hessian(t: &[f64], d: &[f64]) -> DMatrix<f64> {
    let n = d.len() as f64;
    let e: Vec<f64> = t.iter().map(|v| v.exp()).collect();
    let s1: f64 = e.iter().sum();
    let sd: f64 = e.iter().zip(d).map(|(e, d)| e * d * d).sum();
    let c = 1.0 + 4.0 * s1;
    let nj: Vec<f64> = d.iter().map(|d| c * d * d - 4.0 * sd).collect();
    let (c2, c3) = (c * c, c * c * c);
    DMatrix::from_fn(t.len(), t.len(), |j, k| {
        if j == k {
            0.5 * e[j] + 2.0 * n * (e[j] / c - 4.0 * e[j] * e[j] / c2)
                - 8.0 * e[j] * (nj[j] / c2 - 8.0 * e[j] * nj[j] / c3)
        } else {
            let ee = e[j] * e[k];
            -(8.0 * n / c2 * ee + 32.0 / c2 * ee * (d[j] * d[j] - d[k] * d[k]) - 64.0 / c3 * ee * nj[j])
        }
    })
}

/// (Ψ, ∇Ψ, ∇²Ψ) at t.
pub fn reparam_log_posterior(t: &[f64], d: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    (reparam_log_posterior_value(t, d), reparam_gradient(t, d), -reparam_neg_hessian(t, d))
}

/// Laplace marginal from singular values, optimizing Ψ from `start`; returns
/// (log f̂, t̂).
pub fn log_marginal_from_singular_values(d: &[f64], start: &[f64]) -> Result<(f64, Vec<f64>)> {
    let fgh = |t: &[f64]| {
        let (f, g, h) = reparam_log_posterior(t, d);
        f.is_finite().then(|| (f, g.as_slice().to_vec(), h))
    };
    let mut best = newton_maximize(fgh, start, MODE_OPTIONS)?;
    let grad_norm = |t: &[f64]| reparam_gradient(t, d).amax();
    if grad_norm(&best.argmax) > RESTART_GRAD_TOL {
        let mut rng = substream(label("rank1-restarts"), &[]);
        for _ in 0..RESTARTS {
            let init: Vec<f64> = (0..d.len()).map(|_| std_normal(&mut rng)).collect();
            let r = newton_maximize(fgh, &init, MODE_OPTIONS)?;
            let ok = grad_norm(&r.argmax) <= RESTART_GRAD_TOL;
            let best_ok = grad_norm(&best.argmax) <= RESTART_GRAD_TOL;
            if (ok && !best_ok) || (ok == best_ok && r.value > best.value) {
                best = r;
            }
        }
        if grad_norm(&best.argmax) > RESTART_GRAD_TOL {
            log::warn!("rank-1 marginal optimization did not converge after {RESTARTS} restarts");
        }
    }
    let h = reparam_neg_hessian(&best.argmax, d);
    let lm = laplace_log_integral(best.value, &h, d.len())?;
    Ok((lm, best.argmax))
}

#[derive(Debug, Clone)]
pub struct Rank1Model {
    n: usize,
}

impl Rank1Model {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n || x.ncols() != self.n {
            return Err(Error::InvalidParameter(format!(
                "expected a {n}×{n} matrix, got {}×{}",
                x.nrows(),
                x.ncols(),
                n = self.n
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("rank-1 data must be finite".into()));
        }
        Ok(())
    }

    /// Draw from U | X, V ~ N(4XV/(4‖V‖²+1), I/(4‖V‖²+1)).
    pub fn sample_u_given_v(x: &DMatrix<f64>, v: &DVector<f64>, rng: &mut Rng) -> DVector<f64> {
        let p = 4.0 * v.norm_squared() + 1.0;
        let mean = x * v * (4.0 / p);
        let sd = p.recip().sqrt();
        mean.map(|m| normal(rng, m, sd))
    }
}

impl ModelPlugin for Rank1Model {
    type Params = Rank1Params;
    type Data = Rank1Data;

    fn log_likelihood(&self, params: &Rank1Params, x: &Rank1Data) -> f64 {
        let resid = x - params.signal();
        let m = resid.len() as f64;
        -0.5 * m * (ln_2pi() + NOISE_VAR.ln()) - 0.5 * resid.norm_squared() / NOISE_VAR
    }

    fn log_prior(&self, params: &Rank1Params) -> f64 {
        let k = (params.u.len() + params.v.len()) as f64;
        -0.5 * k * ln_2pi() - 0.5 * (params.u.norm_squared() + params.v.norm_squared())
    }

    fn sample_posterior(
        &self,
        x: &Rank1Data,
        count: usize,
        chain: &ChainConfig,
        rng: &mut Rng,
    ) -> Result<PosteriorDraws<Rank1Params>> {
        self.check(x)?;
        let (_, u1, v1) = leading_singular_pair(x);
        let scale = (self.n as f64).sqrt();
        let init = Rank1Params {
            u: u1 * scale,
            v: v1 * scale,
        };
        let xt = x.transpose();
        let states = mcmc::collect_chain(chain, count, init, rng, |s, rng| {
            s.u = Self::sample_u_given_v(x, &s.v, rng);
            s.v = Self::sample_u_given_v(&xt, &s.u, rng);
            Ok(())
        })?;
        Ok(PosteriorDraws {
            draws: states,
            burn_in: chain.burn_in,
            thin: chain.thin,
            acceptance_rate: None,
        })
    }

    fn log_marginal_hat(&self, x: &Rank1Data) -> Result<f64> {
        self.check(x)?;
        let d = singular_values(x);
        Ok(log_marginal_from_singular_values(&d, &vec![0.0; d.len()])?.0)
    }

    fn sample_copies(
        &self,
        x: &Rank1Data,
        draws: &PosteriorDraws<Rank1Params>,
        count: usize,
        rng: &mut Rng,
    ) -> Result<CopySet<Rank1Data>> {
        self.check(x)?;
        if draws.is_empty() {
            return Err(Error::InvalidParameter("copy sampling needs B >= 1 posterior draws".into()));
        }
        let mut signal_sum = DMatrix::zeros(self.n, self.n);
        for p in &draws.draws {
            signal_sum += p.signal();
        }
        let updater = EntryUpdater {
            b: draws.len() as f64,
            signal_sum,
            warm: vec![0.0; self.n],
            current: None,
        };
        let mut sweep = CoordinateSweep::new(updater);
        let out = mcmc::permuted_serial_sampler(x, &mut sweep, count, rng)?;
        if let Some(a) = out.mean_acceptance() {
            if a < ACCEPTANCE_HEALTH {
                log::warn!("rank-1 copy acceptance {a:.3} below {ACCEPTANCE_HEALTH}");
            }
        }
        Ok(out)
    }

    fn data_shape(&self) -> DataShape {
        DataShape {
            dims: vec![self.n, self.n],
            discrete: false,
        }
    }

    fn in_parameter_space(&self, p: &Rank1Params) -> bool {
        p.u.len() == self.n && p.v.len() == self.n && p.u.iter().chain(p.v.iter()).all(|v| v.is_finite())
    }
}

/// Per-entry MH with the Laplace proposal N(x*, −1/ζ''(x*)), entries in
/// row-major order.
struct EntryUpdater {
    b: f64,
    /// Σ_b û_b v̂_bᵀ.
    signal_sum: DMatrix<f64>,
    warm: Vec<f64>,
    /// log f̂ and t̂ at the current state.
    current: Option<(f64, Vec<f64>)>,
}

impl EntryUpdater {
    fn log_marginal(x: &DMatrix<f64>, warm: &[f64]) -> Result<(f64, Vec<f64>)> {
        log_marginal_from_singular_values(&singular_values(x), warm)
    }

    /// Σ_b log f_{θ̂_b} as a function of one entry, up to a constant.
    fn lik_part(&self, i: usize, j: usize, v: f64) -> f64 {
        -2.0 * self.b * v * v + 4.0 * v * self.signal_sum[(i, j)]
    }
}

impl CoordinateUpdater<DMatrix<f64>> for EntryUpdater {
    fn num_coordinates(&self, state: &DMatrix<f64>) -> usize {
        state.len()
    }

    fn prepare(&mut self, state: &DMatrix<f64>) -> Result<()> {
        if self.b > 1.0 {
            let (lm, t) = Self::log_marginal(state, &self.warm)?;
            self.warm = t.clone();
            self.current = Some((lm, t));
        }
        Ok(())
    }

    fn update(&mut self, state: &mut DMatrix<f64>, k: usize, rng: &mut Rng) -> Result<Move> {
        let n = state.ncols();
        let (i, j) = (k / n, k % n);
        let cur = state[(i, j)];
        let bm1 = self.b - 1.0;
        if bm1 == 0.0 {
            // the conditional is N(û_i v̂_j, 0.25): sample it exactly
            state[(i, j)] = normal(rng, self.signal_sum[(i, j)], NOISE_VAR.sqrt());
            return Ok(Move::Accepted);
        }
        let (lm_cur, t_cur) = self.current.clone().expect("prepared");
        let mut failure = None;
        let mut zeta = |v: f64, st: &mut DMatrix<f64>| -> f64 {
            st[(i, j)] = v;
            match Self::log_marginal(st, &t_cur) {
                Ok((lm, _)) => self.lik_part(i, j, v) - bm1 * lm,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        };
        let mut scratch = state.clone();
        let mode = maximize_1d(|v| zeta(v, &mut scratch), cur, ENTRY_FD_STEP, ENTRY_SEARCH_WIDTH);
        if let Some(e) = failure {
            return Err(e);
        }
        let mode = mode?;
        let curvature = if mode.curvature < 0.0 {
            mode.curvature
        } else {
            log::warn!("rank-1 entry conditional has non-negative curvature; using the likelihood curvature");
            -4.0 * self.b
        };
        let var = -1.0 / curvature;
        let prop = normal(rng, mode.argmax, var.sqrt());
        state[(i, j)] = prop;
        let (lm_prop, t_prop) = Self::log_marginal(state, &t_cur)?;
        state[(i, j)] = cur;
        let log_ratio = self.lik_part(i, j, prop) - bm1 * lm_prop - (self.lik_part(i, j, cur) - bm1 * lm_cur)
            + normal_logpdf(cur, mode.argmax, var)
            - normal_logpdf(prop, mode.argmax, var);
        if mcmc::mh_accept(log_ratio, rng) {
            state[(i, j)] = prop;
            self.warm = t_prop.clone();
            self.current = Some((lm_prop, t_prop));
            Ok(Move::Accepted)
        } else {
            Ok(Move::Rejected)
        }
    }
}
