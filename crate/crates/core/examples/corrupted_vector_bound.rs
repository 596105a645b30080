// Exact check of the corrupted-vector bound: replacing one of B i.i.d.
// draws from p by a draw from q moves the joint law by at most
// √(B·χ²(q‖p))/2 in total variation.

use acssb::diagnostics::{lemma1_check, lemma1_sweep};

pub fn run_example() -> acssb::Result<()> {
    let p = [0.5, 0.3, 0.2];
    let q = [0.4, 0.4, 0.2];
    for b in [1, 2, 4, 8] {
        let r = lemma1_check(&p, &q, b)?;
        println!("B={b}: TV {:.5} <= bound {:.5}: {}", r.tv_exact, r.bound, r.holds);
    }
    let failures = lemma1_sweep(200, 3, 4, 21)?;
    println!("random instances violating the bound: {failures} of 200");
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
