use thiserror::Error;

use crate::market::CustomerId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("period {period} outside the service window [{arrival}, {deadline}] of customer {id}")]
    OutsideWindow {
        id: CustomerId,
        period: usize,
        arrival: usize,
        deadline: usize,
    },

    #[error("infeasible decision: {0}")]
    Infeasible(String),

    #[error("customer {id} reached its deadline at period {period} with {unserved} kWh unserved")]
    DeadlineViolation {
        id: CustomerId,
        period: usize,
        unserved: f64,
    },

    #[error("{count} arrivals in period {period} exceed the per-period capacity {capacity}")]
    Capacity {
        period: usize,
        count: usize,
        capacity: usize,
    },

    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stale forward cache or trace: {0}")]
    Stale(String),

    #[error("non-finite gradient at parameter {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("linear program failure: {0}")]
    Solver(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
