//! Scenario generation and the Monte Carlo harness.

mod harness;
mod scenario;

pub use harness::{
    generate_trials, run_estimator, run_monte_carlo, trial_rng, write_estimates_csv, EstimatorKind, EstimatorSpec,
    MetricRow, MetricTable, RunOptions,
};
pub use scenario::{generate_trial, ScenarioConfig, TargetTruth, Trial};
