//! Experiment protocol: fixed train/test task pools, the meta-training loop
//! with periodic test-time evaluation, repeat averaging and CSV output.

mod config;
mod eval;
mod run;

pub use config::{ExperimentConfig, HyperMode, POOL_SPAN};
pub use eval::{evaluate_gap, grad_steps_sweep, heuristic_metrics, GapReport, Heuristics};
pub use run::{
    average_curves, curve_csv, read_curve, run_experiment, run_repeat, worker_pool, CurvePoint, ExperimentResult,
    RepeatResult, CURVE_HEADER,
};

use std::io;
use std::path::PathBuf;

use crate::metaalgos::{ConfigError, MetaError};
use crate::policy::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("contract violation: {0}")]
    Contract(String),
}
