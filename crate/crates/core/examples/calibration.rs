// Type-I calibration of Monte-Carlo p-values: rejection rate with a
// Clopper–Pearson interval and a KS test against the discrete uniform grid.

use acssb::diagnostics::pvalue_calibration;
use acssb::harness::{oracle_test, MixtureExperiment};
use acssb::rng::{derive_seed, seeded};

pub fn run_example() -> acssb::Result<()> {
    let m = 19;
    let mut pvals = Vec::new();
    for t in 0..300u64 {
        let e = MixtureExperiment::generate(50, 0.0, &mut seeded(derive_seed(22, &[t])))?;
        pvals.push(oracle_test(&e, m, &mut seeded(derive_seed(23, &[t])))?.pval);
    }
    let c = pvalue_calibration(&pvals, m, 0.05, 0);
    println!(
        "oracle under the mixture null: rejection {:.3} [{:.3}, {:.3}], KS D = {:.3}, p = {:.3}",
        c.rejection_rate, c.ci.0, c.ci.1, c.ks_distance, c.ks_pvalue
    );
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
