//! Problem-file ingestion and experiment drivers behind the `minimaxpi`
//! binary.

pub mod commands;
pub mod output;
pub mod problem;

use std::path::Path;

use minimaxpi::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid problem at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// 3 when an iteration budget ran out, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Solver(SolverError::MaxItersExceeded { .. } | SolverError::MaxSteps { .. }) => 3,
            _ => 1,
        }
    }
}
