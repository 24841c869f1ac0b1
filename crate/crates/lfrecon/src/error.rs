//! Error type shared by the whole crate.

use thiserror::Error;

/// Why a random draw was rejected during network generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// A leader ended up with no coupling to any follower (zero column in C).
    ZeroLeaderColumn,
    /// Two leaders are coupled to the same follower.
    SharedFollower,
    /// The assembled dynamics has spectral radius at or above the margin.
    Unstable,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::ZeroLeaderColumn => write!(f, "a leader has no follower connection"),
            RejectReason::SharedFollower => write!(f, "two leaders share a follower"),
            RejectReason::Unstable => write!(f, "dynamics is unstable"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("network generation failed after {retries} attempts (last rejection: {reason})")]
    GenerationExhausted { retries: usize, reason: RejectReason },

    #[error("dynamics is unstable (spectral radius {rho}); pass force to simulate anyway")]
    Unstable { rho: f64 },

    #[error("simulation diverged at step {step} (state exceeded the divergence guard)")]
    Diverged { step: usize },

    #[error("trajectory too short: {n_steps} steps, need at least {min}")]
    TooShort { n_steps: usize, min: usize },

    #[error("lag covariance matrix is ill-conditioned beyond repair (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("no leader coupling: every follower row of B sums to one within the zeroing threshold")]
    NoLeaderCoupling,

    #[error("cannot disentangle D: the estimated C vector is zero")]
    ZeroCouplingVector,

    #[error("support set is empty: no element of CD exceeds the threshold {threshold}")]
    EmptySupport { threshold: f64 },

    #[error("no leader detected: every column norm falls below the threshold")]
    NoLeaderDetected,

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
