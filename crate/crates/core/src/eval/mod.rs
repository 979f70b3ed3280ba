//! Experiment harness: dataset splits, λ tuning, the parameter sweeps and
//! their text reports.

mod config;
pub mod report;
mod split;
pub mod sweep;
mod tune;

pub use config::{
    default_lambda_grid, ExperimentConfig, PlotConfig, SplitConfig, SweepConfig, WindowPoint, OUTPUT_ENV,
};
pub use split::{dataset_hash, run_split, split_specs, Splits};
pub use sweep::{sweep, Axis, MetricsReport, SweepRow};
pub use tune::{classification_error, tune_lambda, LambdaFit, Tuned};
