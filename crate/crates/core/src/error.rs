//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented range or a config file is malformed.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Vector or matrix lengths do not line up.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Malformed runtime input (empty run set, ragged curve lengths, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An adaptive update produced a non-finite weight or combiner value.
    #[error("divergence fault: {0}")]
    Divergence(String),

    /// The two component filters coincide, so no optimal combiner exists.
    #[error("degenerate combiner: component filters coincide")]
    DegenerateCombiner,

    /// A self-check the harness relies on did not hold.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
