//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A specification or parameter combination fails a constructor check.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A numeric argument lies outside the mathematical domain of the
    /// operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An exact enumeration or propagation would exceed its feasibility cap.
    #[error("exact computation infeasible: {0}")]
    InfeasibleSize(String),

    /// Too few samples or grid points to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The linear system of an absorbing-chain solve is singular or failed
    /// to reach the required residual.
    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    /// An experiment produced no usable replicas.
    #[error("experiment failed: {0}")]
    ExperimentFailed(String),

    /// The stopping rule is not meaningful for the requested process.
    #[error("unsupported stopping rule: {0}")]
    UnsupportedStop(String),
}

pub type Result<T> = std::result::Result<T, Error>;
