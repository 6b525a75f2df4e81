use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Check failures (an inequality violated, an identity off tolerance) are not
/// errors: they are recorded in the corresponding report. Errors are reserved
/// for inputs that violate a precondition or solvers that could not finish.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dual evaluation did not converge (best lower bound {best_lower_bound:e})")]
    DualEvaluation { best_lower_bound: f64 },

    #[error("internal consistency: {0}")]
    InternalConsistency(String),

    #[error("inequality structure: {0}")]
    InequalityStructure(String),

    #[error("solver failed after {iterations} iterations: {reason}")]
    Solver {
        reason: String,
        iterations: usize,
        residual_history: Vec<f64>,
    },

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

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
