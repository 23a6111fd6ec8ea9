use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate geometry: UAV and user positions coincide")]
    DegenerateGeometry,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("user index {index} out of range 1..={users}")]
    UserIndex { index: usize, users: usize },

    #[error("infeasible rate split: common portions sum to {sum}, cap is {cap}")]
    InfeasibleSplit { sum: f64, cap: f64 },

    #[error("rate threshold of user {user} cannot be met anywhere")]
    EmptyQosRegion { user: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical corruption: {0}")]
    Numerical(String),

    #[error("non-convex program: {0}")]
    NonConvex(String),

    #[error("optimization aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;
