//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("derivative order {0} unsupported (maximum 3)")]
    UnsupportedOrder(usize),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
    #[error("invalid parameter for {problem}: {message}")]
    InvalidParameter { problem: String, message: String },
    #[error("unknown problem name {0:?}")]
    UnknownProblem(String),
    #[error("no reference solution available for {0}")]
    NoExactSolution(String),
    #[error("non-finite value in {term} at point index {index}")]
    NonFinite { term: String, index: usize },
    #[error("monitor value {value:.6e} below positivity floor {floor:.6e} at {location}")]
    MonitorPositivity { value: f64, floor: f64, location: String },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
