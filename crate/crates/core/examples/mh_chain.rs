// The generic Metropolis–Hastings driver with burn-in and thinning.

use acssb::mcmc::{mh_chain, symmetric_kernel, ChainConfig};
use acssb::numerics::dist::normal;
use acssb::rng::seeded;

pub fn run_example() -> acssb::Result<()> {
    // bimodal 1-D target, random-walk proposal
    let target = |x: &f64| {
        let a = -0.5 * (x - 2.0).powi(2);
        let b = -0.5 * (x + 2.0).powi(2);
        a.max(b) + (-(a - b).abs()).exp().ln_1p()
    };
    let kernel = symmetric_kernel(target, |x: &f64, rng: &mut acssb::rng::Rng| normal(rng, *x, 2.0));
    let config = ChainConfig::new(1000, 5)?;
    let out = mh_chain(&kernel, &config, 0.0, 4000, &mut seeded(13))?;
    let mean = out.states.iter().sum::<f64>() / out.states.len() as f64;
    let right = out.states.iter().filter(|&&x| x > 0.0).count() as f64 / out.states.len() as f64;
    println!(
        "{} states after {} steps: acceptance {:.2}, mean {mean:.3}, mass right of 0 {right:.3}",
        out.states.len(),
        out.steps,
        out.acceptance_rate
    );
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
