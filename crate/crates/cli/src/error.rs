use std::path::{Path, PathBuf};

use thiserror::Error;

use hydroda::data::DataError;
use hydroda::metrics::MetricsError;
use hydroda::training::{CheckpointError, TrainError};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("output directory {0} is in use by another run (remove .hydroda.lock if it is stale)")]
    Locked(PathBuf),
    #[error("insufficient history for {basin} on {date}: need {required} consecutive days with valid forcings before the issue date")]
    History {
        basin: String,
        date: chrono::NaiveDate,
        required: usize,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Train(TrainError::NonFinite { .. } | TrainError::Numerics(_)) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        }
    }
}
