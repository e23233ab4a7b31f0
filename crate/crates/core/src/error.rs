//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by model construction, solvers and simulators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("ill-conditioned matrix: {0}")]
    IllConditioned(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("budget error: {0}")]
    Budget(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Candidate measurement is numerically dependent on the active set
    /// (Schur complement of the augmented noise block is ~0).
    #[error("near-singular candidate: {0}")]
    NearSingular(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
