//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HmmError {
    /// Binary operation on measures living on different grid spaces.
    #[error("grid spaces do not match ({0})")]
    SpaceMismatch(String),

    /// A state or observation point lies outside the declared compact domain.
    #[error("point {point:?} lies outside the domain bounds")]
    OutOfBounds { point: Vec<f64> },

    /// Complex parameter outside the validated continuation vicinity.
    #[error("parameter outside the continuation vicinity: {0}")]
    ContinuationDomain(String),

    /// Filter normalizer too small to take a logarithm.
    #[error("filter normalizer underflow (|mass| = {magnitude:e})")]
    NormalizerUnderflow { magnitude: f64 },

    /// Rejection sampler exhausted its attempt budget.
    #[error("rejection sampling exceeded {attempts} attempts; truncation box too small")]
    RejectionBudget { attempts: u64 },

    /// Model definition rejected at construction.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Enumeration or iteration budget exceeded.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Monte Carlo estimation failed (too many aborted trajectories).
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// Invalid argument to a numeric routine.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file problem.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HmmError>;
