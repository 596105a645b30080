//! Every example runs to completion.

mod calibration {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/calibration.rs"));
}

mod corrupted_vector_bound {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/corrupted_vector_bound.rs"));
}

mod custom_model {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/custom_model.rs"));
}

mod exchangeability_bound {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/exchangeability_bound.rs"));
}

mod experiment_config {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/experiment_config.rs"));
}

mod group_sparse_test {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/group_sparse_test.rs"));
}

mod laplace_marginal {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/laplace_marginal.rs"));
}

mod logistic_test {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/logistic_test.rs"));
}

mod mh_chain {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mh_chain.rs"));
}

mod mixture_test {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mixture_test.rs"));
}

mod oracle_comparison {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/oracle_comparison.rs"));
}

mod plot_data {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/plot_data.rs"));
}

mod power_experiment {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/power_experiment.rs"));
}

mod rank1_test {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/rank1_test.rs"));
}

mod serial_sampler {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/serial_sampler.rs"));
}

mod spline_test {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/spline_test.rs"));
}

mod test_statistics {
    #![allow(dead_code)]
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/test_statistics.rs"));
}

#[test]
fn calibration() {
    calibration::run_example().unwrap();
}

#[test]
fn corrupted_vector_bound() {
    corrupted_vector_bound::run_example().unwrap();
}

#[test]
fn custom_model() {
    custom_model::run_example().unwrap();
}

#[test]
fn exchangeability_bound() {
    exchangeability_bound::run_example().unwrap();
}

#[test]
fn experiment_config() {
    experiment_config::run_example().unwrap();
}

#[test]
fn group_sparse_test() {
    group_sparse_test::run_example().unwrap();
}

#[test]
fn laplace_marginal() {
    laplace_marginal::run_example().unwrap();
}

#[test]
fn logistic_test() {
    logistic_test::run_example().unwrap();
}

#[test]
fn mh_chain() {
    mh_chain::run_example().unwrap();
}

#[test]
fn mixture_test() {
    mixture_test::run_example().unwrap();
}

#[test]
fn oracle_comparison() {
    oracle_comparison::run_example().unwrap();
}

#[test]
fn plot_data() {
    plot_data::run_example().unwrap();
}

#[test]
fn power_experiment() {
    power_experiment::run_example().unwrap();
}

#[test]
fn rank1_test() {
    rank1_test::run_example().unwrap();
}

#[test]
fn serial_sampler() {
    serial_sampler::run_example().unwrap();
}

#[test]
fn spline_test() {
    spline_test::run_example().unwrap();
}

#[test]
fn test_statistics() {
    test_statistics::run_example().unwrap();
}
