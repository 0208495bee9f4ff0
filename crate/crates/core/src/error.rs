use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A ratio or bound has no defined value for the given data
    /// (e.g. zero denominators, non-positive yield bounds).
    #[error("undefined result: {0}")]
    Undefined(String),

    /// An iterative fit stopped without meeting its convergence criterion.
    #[error("fit failed after {iterations} iterations: {reason} (residual norm {residual_norm:.6e}, last params {last_params:?})")]
    Fit {
        reason: String,
        iterations: usize,
        residual_norm: f64,
        last_params: Vec<f64>,
    },

    /// Too many bootstrap resamples could not be evaluated.
    #[error("bootstrap aborted: {failed} of {trials} resamples failed (first failure: {first_failure})")]
    Bootstrap {
        failed: usize,
        trials: usize,
        first_failure: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn undefined(msg: impl Into<String>) -> Self {
        Error::Undefined(msg.into())
    }

    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
