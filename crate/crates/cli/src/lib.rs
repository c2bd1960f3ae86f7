//! Experiment runner for adaptive multi-task training: spec files, run
//! artifacts, paired comparisons, task-count sweeps and SVG plots.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use config::ExperimentSpec;
pub use error::{CliError, ConfigError};
