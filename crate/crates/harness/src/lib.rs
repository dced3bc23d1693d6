//! Experiment plumbing around `gradinv-core`: batches from synthetic
//! generators or IDX files, matching-based metrics, TOML-configured sweeps
//! with CSV/JSON-lines output, and the `gradinv` command line.

pub mod config;
pub mod data;
pub mod metrics;
pub mod sweep;

pub use config::{DataConfig, DataKind, ExperimentConfig, OutputFormat, Point};
pub use sweep::{run_point, run_sweep, DataSource, ExperimentRecord, SweepOptions};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Core(#[from] gradinv_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for numerical failures of the attack, 1 for
    /// everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}
