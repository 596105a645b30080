// Plugging a new null family into aCSS-B. The family is X_i ~ N(θ, 1)
// i.i.d. with prior θ ~ N(0, 1); posterior, marginal and copy
// conditionals are all Gaussian, so every stage is exact.

use acssb::acss::{DataShape, ModelPlugin, PosteriorDraws};
use acssb::mcmc::{permuted_serial_sampler, ChainConfig, CoordinateSweep, CoordinateUpdater, Move};
use acssb::numerics::dist::{normal, normal_logpdf};
use acssb::rng::{seeded, Rng};
use acssb::{run_test, CopySet, TestConfig};

struct GaussianLocation {
    n: usize,
}

impl ModelPlugin for GaussianLocation {
    type Params = f64;
    type Data = Vec<f64>;

    fn log_likelihood(&self, theta: &f64, x: &Vec<f64>) -> f64 {
        x.iter().map(|&xi| normal_logpdf(xi, *theta, 1.0)).sum()
    }

    fn log_prior(&self, theta: &f64) -> f64 {
        normal_logpdf(*theta, 0.0, 1.0)
    }

    fn sample_posterior(&self, x: &Vec<f64>, count: usize, _: &ChainConfig, rng: &mut Rng) -> acssb::Result<PosteriorDraws<f64>> {
        let prec = 1.0 + self.n as f64;
        let mean = x.iter().sum::<f64>() / prec;
        Ok(PosteriorDraws::exact((0..count).map(|_| normal(rng, mean, prec.recip().sqrt())).collect()))
    }

    fn log_marginal_hat(&self, x: &Vec<f64>) -> acssb::Result<f64> {
        // X ~ N(0, I + 11ᵀ)
        let n = self.n as f64;
        let s: f64 = x.iter().sum();
        let q = x.iter().map(|v| v * v).sum::<f64>() - s * s / (n + 1.0);
        Ok(-0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * (n + 1.0).ln() - 0.5 * q)
    }

    fn sample_copies(&self, x: &Vec<f64>, draws: &PosteriorDraws<f64>, count: usize, rng: &mut Rng) -> acssb::Result<CopySet<Vec<f64>>> {
        let updater = ExactConditional {
            b: draws.len() as f64,
            theta_sum: draws.draws.iter().sum(),
            n: self.n as f64,
        };
        permuted_serial_sampler(x, &mut CoordinateSweep::new(updater), count, rng)
    }

    fn data_shape(&self) -> DataShape {
        DataShape { dims: vec![self.n], discrete: false }
    }
}

/// x_i | x₋ᵢ under Σ_b log f_θb(x) − (B−1) log f̄(x) is Gaussian with
/// precision 1 + (B−1)/(n+1).
struct ExactConditional {
    b: f64,
    theta_sum: f64,
    n: f64,
}

impl CoordinateUpdater<Vec<f64>> for ExactConditional {
    fn num_coordinates(&self, x: &Vec<f64>) -> usize {
        x.len()
    }

    fn update(&mut self, x: &mut Vec<f64>, i: usize, rng: &mut Rng) -> acssb::Result<Move> {
        let rest: f64 = x.iter().sum::<f64>() - x[i];
        let prec = 1.0 + (self.b - 1.0) / (self.n + 1.0);
        let mean = (self.theta_sum - (self.b - 1.0) * rest / (self.n + 1.0)) / prec;
        x[i] = normal(rng, mean, prec.recip().sqrt());
        Ok(Move::Exact)
    }
}

pub fn run_example() -> acssb::Result<()> {
    let n = 30;
    let model = GaussianLocation { n };
    let mut rng = seeded(11);
    let config = TestConfig { b: 10, m: 99, seed: 12, ..TestConfig::default() };
    let kurtosis = |x: &Vec<f64>| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / x.len() as f64;
        x.iter().map(|a| (a - m).powi(4)).sum::<f64>() / x.len() as f64 / (v * v)
    };
    let null: Vec<f64> = (0..n).map(|_| normal(&mut rng, 0.7, 1.0)).collect();
    // heavy tails: a Student-like scale mixture
    let alt: Vec<f64> = (0..n)
        .map(|_| {
            let s = if rng.random_bool(0.2) { 5.0 } else { 0.6 };
            normal(&mut rng, 0.7, s)
        })
        .collect();
    for (name, x) in [("gaussian", null), ("heavy-tailed", alt)] {
        let out = run_test(&model, &x, kurtosis, &config)?;
        println!("{name}: kurtosis {:.2}, p = {:.3}", out.t_obs, out.pval);
    }
    Ok(())
}

use rand::Rng as _;

fn main() -> acssb::Result<()> {
    run_example()
}
