// Experiment configuration as text: defaults, overrides and round-trips.

use acssb::harness::{ExperimentConfig, ModelKind};

pub fn run_example() -> acssb::Result<()> {
    let text = "\
# rank-one experiment at reduced size
model = rank1
signal_grid = 0:1:5
trials = 100
M = 100
n = 6
";
    let cfg = ExperimentConfig::from_text(text)?;
    assert_eq!(cfg.model, ModelKind::Rank1);
    println!("grid {:?}, size {}, B {}, seed {}", cfg.signal_grid, cfg.size(), cfg.b, cfg.seed);
    let back = ExperimentConfig::from_text(&cfg.to_text())?;
    assert_eq!(back.to_text(), cfg.to_text());
    print!("{}", cfg.to_text());
    if let Err(e) = ExperimentConfig::from_text("model = rank1\nalpha = 1.5\n") {
        println!("rejected: {e}");
    }
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
