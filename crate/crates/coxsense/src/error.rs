//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the domain box.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid argument value (sizes, signs, empty inputs).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Duplicate or otherwise degenerate node set.
    #[error("degenerate nodes: {0}")]
    DegenerateNodes(String),

    /// Change-of-basis matrix is numerically singular.
    #[error("basis degeneracy: {0}")]
    BasisDegeneracy(String),

    /// Rejection sampling exhausted its retry budget.
    #[error("sampling failure: {0}")]
    SamplingFailure(String),

    /// Iterative solver did not reach the requested tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A numerical routine hit an unrecoverable state (cycling, NaN factor).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A Markov chain produced a non-finite iterate.
    #[error("divergence at step {step}: {message}")]
    Divergence { step: usize, message: String },

    /// Model-level inconsistency (e.g. negative intensity where one cannot be).
    #[error("model error: {0}")]
    Model(String),

    /// A size cap was exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Configuration failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Invariant that should be unreachable by construction.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
