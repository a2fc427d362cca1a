use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument violated its precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Binary path operation on paths with different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Reflection precondition f(0) >= g(0) violated.
    #[error("precondition violation: {0}")]
    Precondition(String),

    /// A sampled or loaded value was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed or out-of-contract external input data.
    #[error("input data error: {0}")]
    InputData(String),

    /// A statistical routine was handed a degenerate sample.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
