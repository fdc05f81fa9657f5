//! Error types shared across the solver.

use thiserror::Error;

/// Errors produced by problem evaluation, ingestion and the solver driver.
#[derive(Debug, Error)]
pub enum Error {
    /// An evaluator returned NaN or infinity. During a line search this is
    /// treated as a step rejection; anywhere else it is a hard error.
    #[error("non-finite value returned by {what}")]
    NonFinite { what: String },

    /// The problem document could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A field of the problem document has inconsistent dimensions.
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },

    /// Requested registry problem does not exist.
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),

    /// A configuration parameter is outside its admissible range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A linear-algebra factorization or an inner loop broke down.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// I/O failure in the front end.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn non_finite(what: impl Into<String>) -> Self {
        Error::NonFinite { what: what.into() }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
