use thiserror::Error;

/// Errors raised by the simulation, approximation and scheduling routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series did not converge after {terms} terms (last term {last_term:e})")]
    NonConvergence { terms: usize, last_term: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value in {context} at t = {t}")]
    NonFinite { context: String, t: f64 },

    #[error("method refused: {0}")]
    Refused(String),

    #[error("inverse Laplace failed at t = {t}: {reason}")]
    Inversion { t: f64, reason: String },

    #[error("quadratic program infeasible: {0}")]
    Infeasible(String),

    #[error("solver stopped after {iterations} iterations (primal residual {primal:e}, dual residual {dual:e})")]
    MaxIterations {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
