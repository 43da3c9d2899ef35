use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which density-matrix invariant drifted out of bounds during propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Drift {
    Trace,
    Hermiticity,
    Positivity,
}

impl std::fmt::Display for Drift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Drift::Trace => f.write_str("trace"),
            Drift::Hermiticity => f.write_str("hermiticity"),
            Drift::Positivity => f.write_str("positivity"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size limit exceeded: {what} needs {requested}, limit is {limit}")]
    SizeLimit {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("not a density matrix: {0}")]
    InvalidState(String),

    #[error("{kind} drift at t = {time}: violation {value:e}")]
    InvariantDrift { time: f64, kind: Drift, value: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for a failed run: 2 for invariant drift, 1 for
    /// I/O, 3 for anything rejected as configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvariantDrift { .. } => 2,
            Error::Io { .. } => 1,
            _ => 3,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
