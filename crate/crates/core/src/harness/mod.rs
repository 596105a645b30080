//! Simulation harness: data-generating processes, oracle comparators,
//! repeated-trial power estimation and CSV output.

mod config;
mod dgp;
mod plot;
mod run;

pub use config::{ExperimentConfig, Method, ModelKind};
pub use dgp::{
    acssb_test, generate_dataset, oracle_copies, oracle_test, Dataset, Experiment, GroupSparseExperiment,
    LogisticExperiment, MixtureExperiment, Rank1Experiment, SplineExperiment,
};
pub use plot::{emit_plot_data, read_trials, summarize, write_plot_csv, write_svg, PowerRow};
pub use run::{run_cell, run_experiment, write_metadata, write_trials, TrialRecord, CSV_HEADER};
