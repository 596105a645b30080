//! The model plug-in contract and the end-to-end test: data → posterior
//! draws → copies → Monte-Carlo p-value.

use serde::Serialize;

use crate::error::{Error, Result, Stage};
use crate::mcmc::ChainConfig;
use crate::rng::{substream, COPIES, POSTERIOR};

/// Shape of the sample space 𝒳.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataShape {
    pub dims: Vec<usize>,
    pub discrete: bool,
}

/// B draws θ̂₁..θ̂_B from π(·|X) with the chain settings that produced them.
#[derive(Debug, Clone)]
pub struct PosteriorDraws<P> {
    pub draws: Vec<P>,
    pub burn_in: usize,
    pub thin: usize,
    /// `None` when the draws are exact (no Metropolis step involved).
    pub acceptance_rate: Option<f64>,
}

impl<P> PosteriorDraws<P> {
    pub fn exact(draws: Vec<P>) -> Self {
        Self {
            draws,
            burn_in: 0,
            thin: 1,
            acceptance_rate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// M copies plus sampler diagnostics. The ordering of `copies` follows the
/// chain and is not exchangeable by itself; only the unordered set is.
#[derive(Debug, Clone)]
pub struct CopySet<D> {
    pub copies: Vec<D>,
    /// Slot m₀ at which the observed data was seated.
    pub insertion_index: usize,
    /// Per-coordinate MH acceptance rates (empty for exact Gibbs updates).
    pub acceptance: Vec<f64>,
}

impl<D> CopySet<D> {
    pub fn mean_acceptance(&self) -> Option<f64> {
        if self.acceptance.is_empty() {
            None
        } else {
            Some(self.acceptance.iter().sum::<f64>() / self.acceptance.len() as f64)
        }
    }
}

/// One parametric null family {f_θ : θ ∈ Θ} with prior π and the samplers
/// that aCSS-B needs.
pub trait ModelPlugin {
    type Params: Clone;
    type Data: Clone;

    /// log f_θ(x); −∞ outside the support.
    fn log_likelihood(&self, params: &Self::Params, data: &Self::Data) -> f64;

    /// log π(θ); −∞ outside Θ.
    fn log_prior(&self, params: &Self::Params) -> f64;

    fn sample_posterior(
        &self,
        data: &Self::Data,
        count: usize,
        chain: &ChainConfig,
        rng: &mut crate::rng::Rng,
    ) -> Result<PosteriorDraws<Self::Params>>;

    /// log f̄_π(x), or the model's approximation log f̂_π(x).
    fn log_marginal_hat(&self, data: &Self::Data) -> Result<f64>;

    /// M copies, jointly exchangeable with `data` whenever `data` is a draw
    /// from ĝ_π(·|θ̂₁:B).
    fn sample_copies(
        &self,
        data: &Self::Data,
        draws: &PosteriorDraws<Self::Params>,
        count: usize,
        rng: &mut crate::rng::Rng,
    ) -> Result<CopySet<Self::Data>>;

    fn data_shape(&self) -> DataShape;

    /// Θ membership test.
    fn in_parameter_space(&self, _params: &Self::Params) -> bool {
        true
    }
}

/// (1 + #{m : T(X̃⁽ᵐ⁾) ≥ T(X)}) / (M + 1), ties counted toward the numerator.
pub fn compute_pvalue(t_obs: f64, t_copies: &[f64]) -> Result<f64> {
    if t_obs.is_nan() || t_copies.iter().any(|t| t.is_nan()) {
        return Err(Error::NonFiniteStatistic);
    }
    let at_least = t_copies.iter().filter(|&&t| t >= t_obs).count();
    Ok((1 + at_least) as f64 / (t_copies.len() + 1) as f64)
}

/// Σ_b log f_{θ̂_b}(x) − (B−1)·log f̂_π(x): the unnormalized log ĝ_π(x|θ̂₁:B).
pub fn log_copy_target<M: ModelPlugin>(
    model: &M,
    x: &M::Data,
    draws: &PosteriorDraws<M::Params>,
) -> Result<f64> {
    let b = draws.len();
    if b == 0 {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    let ll: f64 = draws.draws.iter().map(|p| model.log_likelihood(p, x)).sum();
    if b == 1 || ll == f64::NEG_INFINITY {
        return Ok(ll);
    }
    let lm = model.log_marginal_hat(x)?;
    if !lm.is_finite() {
        return Err(Error::InvalidParameter("marginal approximation is not finite".into()));
    }
    Ok(ll - (b as f64 - 1.0) * lm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestConfig {
    /// Posterior draws B.
    pub b: usize,
    /// Copies M.
    pub m: usize,
    pub chain: ChainConfig,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            b: 25,
            m: 300,
            chain: ChainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutcomeDiagnostics {
    pub posterior_acceptance: Option<f64>,
    pub copy_acceptance: Option<f64>,
    pub insertion_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub t_obs: f64,
    pub t_copies: Vec<f64>,
    pub pval: f64,
    pub diagnostics: OutcomeDiagnostics,
}

fn checked_stat<D, S: Fn(&D) -> f64>(statistic: &S, x: &D) -> Result<f64> {
    let t = statistic(x);
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFiniteStatistic.at(Stage::Statistic))
    }
}

/// Run aCSS-B on `data`: draw B posterior samples, M copies from ĝ_π, and
/// rank the statistic. Posterior and copy stages use separate streams
/// derived from `config.seed`.
pub fn run_test<M, S>(model: &M, data: &M::Data, statistic: S, config: &TestConfig) -> Result<TestOutcome>
where
    M: ModelPlugin,
    S: Fn(&M::Data) -> f64,
{
    if config.b < 1 {
        return Err(Error::InvalidParameter("B must be at least 1".into()));
    }
    let t_obs = checked_stat(&statistic, data)?;
    if config.m == 0 {
        return Ok(TestOutcome {
            t_obs,
            t_copies: Vec::new(),
            pval: 1.0,
            diagnostics: OutcomeDiagnostics::default(),
        });
    }
    let mut post_rng = substream(config.seed, &[POSTERIOR]);
    let draws = model
        .sample_posterior(data, config.b, &config.chain, &mut post_rng)
        .map_err(|e| e.at(Stage::Posterior))?;
    if draws.len() != config.b {
        return Err(Error::InvalidParameter(format!(
            "posterior sampler returned {} draws, expected {}",
            draws.len(),
            config.b
        ))
        .at(Stage::Posterior));
    }
    let mut copy_rng = substream(config.seed, &[COPIES]);
    let copies = model
        .sample_copies(data, &draws, config.m, &mut copy_rng)
        .map_err(|e| e.at(Stage::Copies))?;
    let t_copies = copies
        .copies
        .iter()
        .map(|c| checked_stat(&statistic, c))
        .collect::<Result<Vec<_>>>()?;
    let pval = compute_pvalue(t_obs, &t_copies)?;
    Ok(TestOutcome {
        t_obs,
        t_copies,
        pval,
        diagnostics: OutcomeDiagnostics {
            posterior_acceptance: draws.acceptance_rate,
            copy_acceptance: copies.mean_acceptance(),
            insertion_index: Some(copies.insertion_index),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pvalue_examples() {
        assert_eq!(compute_pvalue(1.0, &[]).unwrap(), 1.0);
        assert_eq!(compute_pvalue(5.0, &[3.0, 7.0, 5.0]).unwrap(), 0.75);
        let below = vec![0.0; 299];
        assert_eq!(compute_pvalue(10.0, &below).unwrap(), 1.0 / 300.0);
        assert!(matches!(compute_pvalue(f64::NAN, &[1.0]), Err(Error::NonFiniteStatistic)));
        assert!(matches!(compute_pvalue(1.0, &[f64::NAN]), Err(Error::NonFiniteStatistic)));
    }

    proptest! {
        #[test]
        fn pvalue_permutation_invariant(t in -5.0..5.0f64, copies in prop::collection::vec(-5.0..5.0f64, 0..40), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut shuffled = copies.clone();
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            prop_assert_eq!(compute_pvalue(t, &copies).unwrap(), compute_pvalue(t, &shuffled).unwrap());
        }

        #[test]
        fn pvalue_monotone_in_tobs(t in -5.0..5.0f64, dt in 0.0..3.0f64, copies in prop::collection::vec(-5.0..5.0f64, 0..40)) {
            prop_assert!(compute_pvalue(t + dt, &copies).unwrap() <= compute_pvalue(t, &copies).unwrap());
        }

        #[test]
        fn pvalue_on_grid(t in -5.0..5.0f64, copies in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0, 2.0]), 0..40)) {
            let p = compute_pvalue(t, &copies).unwrap();
            let k = p * (copies.len() + 1) as f64;
            prop_assert!((k - k.round()).abs() < 1e-9);
            prop_assert!(k.round() >= 1.0 && k.round() <= (copies.len() + 1) as f64);
        }
    }
}
