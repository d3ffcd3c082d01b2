//! Crate-wide error type with a stable mapping to process exit codes.

use thiserror::Error;

/// Everything that can go wrong, bucketed by how the caller should react.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (bad shapes, invalid
    /// probabilities, out-of-range parameters, malformed file content).
    #[error("validation: {0}")]
    Validation(String),

    /// A numerical routine failed to meet its contract (non-convergence,
    /// a violated descent check, a collapsed bracket).
    #[error("numerical: {0}")]
    Numerical(String),

    /// The filesystem said no.
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// File content that could not be parsed; carries the 1-based line.
    #[error("parse: {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 invalid input, 3 numerical failure,
    /// 4 I/O failure. Success is 0.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 2,
            Error::Numerical(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
