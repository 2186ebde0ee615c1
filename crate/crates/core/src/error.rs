use thiserror::Error;

use crate::game_model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model breaks one or more standing assumptions.
    #[error("model rejected: {}", summarize(.0))]
    Rejected(Vec<Violation>),

    #[error("degenerate weight: W({state}) = {value} is not strictly positive")]
    DegenerateWeight { state: usize, value: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("monotonicity violated at iteration {iteration}, state {state}: decrease of {drop:e}")]
    MonotonicityViolation { iteration: usize, state: usize, drop: f64 },

    /// Only reachable through an internal bug: finite matrix games always have a solution.
    #[error("matrix game LP failed: {0}")]
    LpFailure(String),

    #[error("singular linear system while evaluating payoff: {0}")]
    SingularSystem(String),

    #[error("malformed document: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(violations: &[Violation]) -> String {
    match violations {
        [] => "no violations recorded".to_string(),
        [only] => only.to_string(),
        [first, rest @ ..] => format!("{first} (and {} more)", rest.len()),
    }
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error JSON and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Rejected(_) => "REJECTED",
            Error::DegenerateWeight { .. } => "DEGENERATE_WEIGHT",
            Error::Dimension { .. } => "DIMENSION_MISMATCH",
            Error::Invalid(_) => "INVALID_INPUT",
            Error::MaxIterExceeded { .. } => "MAX_ITER_EXCEEDED",
            Error::MonotonicityViolation { .. } => "MONOTONICITY_VIOLATION",
            Error::LpFailure(_) => "LP_INFEASIBLE",
            Error::SingularSystem(_) => "SINGULAR_SYSTEM",
            Error::Parse(_) => "PARSE_ERROR",
            Error::Io(_) => "IO_ERROR",
        }
    }
}
