// A small power study through the experiment harness: trials over a
// signal grid, one CSV row per (signal, trial, method), then a power table.

use acssb::harness::{run_experiment, summarize, write_trials, ExperimentConfig, Method, ModelKind};

pub fn run_example() -> acssb::Result<()> {
    let mut cfg = ExperimentConfig::new(ModelKind::Spline);
    cfg.signal_grid = vec![0.0, 1.8];
    cfg.trials = 4;
    cfg.b = 5;
    cfg.m = 19;
    cfg.burn_in = 50;
    cfg.thin = 2;
    cfg.size = Some(30);
    cfg.seed = 19;
    cfg.methods = vec![Method::Acssb, Method::Oracle];
    let records = run_experiment(&cfg)?;
    let mut csv = Vec::new();
    write_trials(&records, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    let trials: Vec<_> = records
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (r.model.clone(), r.method.to_string(), r.signal, r.reject.unwrap_or(false)))
        .collect();
    for row in summarize(&trials) {
        println!("{} {:<6} c={:<4} power {:.2} ± {:.2}", row.model, row.method, row.signal, row.power, row.stderr);
    }
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
