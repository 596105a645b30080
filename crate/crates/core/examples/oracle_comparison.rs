// aCSS-B and the oracle that knows θ₀ run on the same simulated datasets.

use acssb::harness::{acssb_test, oracle_test, SplineExperiment};
use acssb::mcmc::ChainConfig;
use acssb::rng::seeded;
use acssb::TestConfig;

pub fn run_example() -> acssb::Result<()> {
    let mut rng = seeded(16);
    let config = TestConfig {
        b: 10,
        m: 19,
        chain: ChainConfig::new(100, 5)?,
        seed: 17,
    };
    println!("{:>5} {:>8} {:>8}", "c", "acssb", "oracle");
    for c in [0.0, 0.9, 1.8] {
        let e = SplineExperiment::generate(50, c, &mut rng);
        let a = acssb_test(&e, &config)?;
        let o = oracle_test(&e, config.m, &mut seeded(18))?;
        println!("{c:>5} {:>8.3} {:>8.3}", a.pval, o.pval);
    }
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
