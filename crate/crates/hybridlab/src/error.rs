use std::path::PathBuf;

use thiserror::Error;

/// Failures of the front end, grouped by the exit status they map to.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config field `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] hybridlab_core::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl LabError {
    /// Process exit status: 2 for configuration problems, 3 for everything
    /// that goes wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Read { .. } | LabError::Parse { .. } | LabError::Validation { .. } => 2,
            _ => 3,
        }
    }
}
