//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or contradictory input data (bad CSV rows, gaps, out-of-range
    /// flags). Maps to CLI exit code 2.
    #[error("validation: {0}")]
    Validation(String),
    /// Numeric failure: non-convergence, non-invertible fit, degenerate
    /// statistics. Maps to CLI exit code 3.
    #[error("numeric: {0}")]
    Numeric(String),
    /// Filesystem problem. Maps to CLI exit code 4.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code the CLI reports for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Numeric(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
