//! Learning-separation laboratory.
//!
//! Two trapdoor concept classes (interval concepts over discrete logarithms
//! and bit concepts over RSA cube roots), PAC trial harnesses, learners that
//! use classical surrogates in place of Shor's algorithm, the learner-to-
//! inverter reduction, and an executable checklist that turns a concept
//! decomposition `c(x) = f(g^{-1}(x))` into a separation report.

pub mod checklist;
pub mod cuberoot;
pub mod decomposition;
pub mod dlp;
pub mod error;
pub mod heuristic;
pub mod instrument;
pub mod numtheory;
pub mod pac;
pub mod power_of_data;
pub mod seeds;

pub use error::ConceptError;
pub use numtheory::NumberTheoryError;
pub use pac::{Hypothesis, LabeledExample, Label, Learner, LearnerConfig, LearningProblem, PacError};
