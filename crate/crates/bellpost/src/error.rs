//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type. Variants name the breached contract so that the CLI
/// can surface a precise diagnostic and a nonzero exit status.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument value is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A caller-side precondition (e.g. unit norm) does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numeric integrity check failed (non-convergence, probability out of
    /// range, optimizer/closed-form disagreement, ...).
    #[error("numeric integrity: {0}")]
    Numeric(String),

    /// Postselection rejected every trial; statistics would silently lie.
    #[error("empty postselected subensemble: {0}")]
    EmptySubensemble(String),

    /// A rejection-sampling search ran out of its sample budget.
    #[error("search exhausted: {0}")]
    SearchExhausted(String),

    /// Configuration file problem, with the offending field path.
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// A CSV row did not conform to its schema.
    #[error("schema mismatch in column `{0}`")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
