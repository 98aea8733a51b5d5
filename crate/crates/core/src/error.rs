use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A truncated basis is too small for the requested state.
    #[error("truncation: {what} (need dimension >= {required}, have {have})")]
    Truncation {
        what: String,
        required: usize,
        have: usize,
    },

    #[error("quadrature missed tolerance {tol:e}: best estimate {best}, error estimate {err:e}")]
    Quadrature { best: C64, err: f64, tol: f64 },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("step halving did not converge: last change {change:e} > {tol:e}")]
    StepConvergence { change: f64, tol: f64 },

    #[error("field and mirror are disentangled at t = {t}: F(t) = 0")]
    Disentangled { t: f64 },

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("outside the domain of validity: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
