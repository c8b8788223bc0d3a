//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constraint generator returned an empty candidate set for a coordinate.
    #[error("constraint admits no candidate value at run {row}, column {col}")]
    ConstraintExhausted { row: usize, col: usize },

    /// A matrix factorization failed even after jitter escalation.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The Fisher information matrix is singular (A-criterion only; the
    /// D-criterion maps singularity to a large negative sentinel instead).
    #[error("singular Fisher information matrix")]
    SingularInformation,

    /// A utility evaluation produced a non-finite draw.
    #[error("non-finite utility draw at index {0}")]
    NonFinite(usize),

    /// Mismatched dimensions between two objects that must conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
