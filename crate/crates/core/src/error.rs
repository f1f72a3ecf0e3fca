use thiserror::Error;

use crate::numtheory::NumberTheoryError;
use crate::pac::PacError;

/// Errors raised by the concept-class modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConceptError {
    #[error("{value} is outside the domain {domain}")]
    Domain { value: u64, domain: String },
    #[error("{value} shares the factor {factor} with the modulus {n}")]
    NonUnit { value: u64, n: u64, factor: u64 },
    #[error("concept answers are inconsistent: {0}")]
    Inconsistent(String),
    #[error("no hypothesis index is consistent with the {0} examples")]
    InconsistentData(usize),
    #[error(transparent)]
    NumberTheory(#[from] NumberTheoryError),
    #[error(transparent)]
    Pac(#[from] PacError),
}

impl From<ConceptError> for PacError {
    fn from(e: ConceptError) -> Self {
        match e {
            ConceptError::Pac(p) => p,
            other => PacError::Evaluation(other.to_string()),
        }
    }
}
