//! Error type shared across the crate.

use crate::stiefel::FitReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by snapshot handling, fitting, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition (shape mismatch,
    /// out-of-range dimension, inconsistent configuration).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical operation failed (singular system, non-finite values,
    /// failed factorization). Carries the partial solver report when the
    /// failure happened inside an optimization run.
    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        report: Option<Box<FitReport>>,
    },

    /// Underlying file-system failure.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or unsupported file contents.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            report: None,
        }
    }

    pub fn numerical_with_report(msg: impl Into<String>, report: FitReport) -> Self {
        Error::Numerical {
            message: msg.into(),
            report: Some(Box::new(report)),
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
