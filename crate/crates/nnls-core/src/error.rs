//! Shared error type for every module in the crate.

use thiserror::Error;

use crate::solvers::{SolveReport, TracePoint};

/// Errors surfaced by solvers, generators, and file I/O.
#[derive(Debug, Error)]
pub enum NnlsError {
    /// Operand shapes do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterate became non-finite; the last finite trace is attached.
    #[error("solver diverged at iteration {iter}: {message}")]
    Divergence {
        iter: u64,
        message: String,
        trace: Vec<TracePoint>,
    },

    /// The iteration budget ran out; the best iterate so far is attached.
    #[error("iteration limit {max_iters} exceeded")]
    MaxIters {
        max_iters: u64,
        report: Box<SolveReport>,
    },

    /// A text document could not be parsed. `line` is 1-based; 0 means
    /// the defect is not tied to a single line (e.g. a missing field).
    #[error("parse error (line {line}): {message}")]
    Parse { line: usize, message: String },

    /// Parsed data is structurally valid but internally inconsistent.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnlsError>;

impl NnlsError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        NnlsError::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        NnlsError::Domain(msg.into())
    }
}
