use thiserror::Error;

/// Errors raised by model construction, dynamics and limit computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("correct-site count {l} out of range for M = {m}")]
    CountOutOfRange { l: usize, m: usize },
    #[error("vector length {got} does not match M = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("not a probability vector (sum {sum}, min {min})")]
    NotOnSimplex { sum: f64, min: f64 },
    #[error("ranking is not interior (min entry {min})")]
    NotInterior { min: f64 },
    #[error("majority signal is a tie and no tie break was drawn")]
    UnresolvedTie,
    #[error("choice denominator is zero")]
    ZeroDenominator,
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("no convergence after {steps} steps (residual {residual:e})")]
    NonConvergence { steps: usize, residual: f64 },
    #[error("no fixed point found")]
    NoRoot,
    #[error("ambiguous start: x0 = {x0} is an unstable or marginal rest point")]
    AmbiguousStart { x0: f64 },
    #[error("{0}")]
    Precondition(String),
    #[error("outside validity region: {0}")]
    OutsideValidity(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
