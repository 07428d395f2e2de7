use thiserror::Error;

/// Errors raised by model construction, projections and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("feasible set is empty: {0}")]
    Infeasible(String),

    #[error("separating half-space does not meet the feasible set (min {min_value} > offset {offset})")]
    SeparationFailure { min_value: f64, offset: f64 },

    #[error("projection did not settle within {0} sweeps")]
    ProjectionStalled(usize),

    #[error("line search exceeded {0} backtracking steps")]
    LineSearchFailure(usize),

    #[error("brute-force oracle limited to {max} users, got {actual}")]
    OracleTooLarge { max: usize, actual: usize },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
