use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid optimizer config: {0}")]
    InvalidOptimizer(String),

    #[error("invalid run config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("label {label} at position {index} is outside [0, {class_count})")]
    InvalidLabel {
        index: usize,
        label: usize,
        class_count: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("task {task} diverged at iteration {iteration} ({model} model): non-finite loss")]
    Diverged {
        task: usize,
        iteration: u64,
        model: &'static str,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("relationship list needs at least 2 tasks, got {0}")]
    TooFewTasks(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
