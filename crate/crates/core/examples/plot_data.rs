// From a trial CSV to a power table and an SVG chart.

use acssb::harness::{emit_plot_data, run_experiment, write_trials, ExperimentConfig, Method, ModelKind};

pub fn run_example() -> acssb::Result<()> {
    let mut cfg = ExperimentConfig::new(ModelKind::Mixture);
    cfg.signal_grid = vec![0.0, 0.25, 0.5];
    cfg.trials = 10;
    cfg.m = 19;
    cfg.seed = 20;
    cfg.methods = vec![Method::Oracle];
    let dir = std::env::temp_dir().join(format!("acssb-plot-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let trials = dir.join("trials.csv");
    write_trials(&run_experiment(&cfg)?, std::fs::File::create(&trials)?)?;
    let rows = emit_plot_data(&trials, &dir.join("power.csv"), Some(&dir.join("power.svg")))?;
    for r in &rows {
        println!("{} c={} power {:.2} (n={})", r.method, r.signal, r.power, r.n_trials);
    }
    println!("wrote {}", dir.join("power.svg").display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> acssb::Result<()> {
    run_example()
}
