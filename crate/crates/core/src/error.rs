use thiserror::Error;

/// Errors produced by model construction, simulation, estimation and bound evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("no orthogonal QPSK pilot design for pilot_len={pilot_len}, n_users={n_users}")]
    NoPilotDesign { pilot_len: usize, n_users: usize },

    #[error("observation {index} has non-positive variance {value:e}")]
    DegenerateVariance { index: usize, value: f64 },

    #[error("least-squares system is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("pilot symbol vector is all zeros")]
    ZeroSymbol,

    #[error("correlation {0} too close to +-1 for the orthant kernel")]
    DegenerateCorrelation(f64),

    #[error("oversampling factor must be 1 for the white-noise Fisher information (got {0})")]
    NotWhiteNoise(usize),

    #[error("matrix is singular or not positive definite (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
