use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("grid mismatch: {left} modes vs {right} modes")]
    GridMismatch { left: usize, right: usize },

    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("increment dt {actual} does not match stepper step {expected}")]
    StepMismatch { expected: f64, actual: f64 },

    #[error("{len} increments cannot be grouped by factor {factor}")]
    Divisibility { len: usize, factor: usize },

    #[error("negative eigenvalue {value} for mode {mode}")]
    NegativeEigenvalue { mode: i64, value: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last relative update {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid time {0}")]
    InvalidTime(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("slope fit needs at least two strictly positive points")]
    InvalidFitData,
}

pub type Result<T> = std::result::Result<T, Error>;
