#![doc = include_str!("../../../README.md")]

pub mod acss;
pub mod diagnostics;
pub mod error;
pub mod mcmc;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod statistics;
pub mod harness;

pub use acss::{
    compute_pvalue, log_copy_target, run_test, CopySet, DataShape, ModelPlugin, PosteriorDraws, TestConfig,
    TestOutcome,
};
pub use error::{Error, Result};
