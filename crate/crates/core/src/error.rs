use alloc::boxed::Box;
use alloc::string::String;

use crate::backtest::Date;

/// Errors raised by the geometric overlay library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("chart mismatch: {object} is on chart `{found}`, expected `{expected}`")]
    ChartMismatch {
        object: &'static str,
        expected: String,
        found: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error(
        "{what} is not positive definite (min eigenvalue {min_eigenvalue:.3e}); \
         apply regularize_penalty before using it as a metric"
    )]
    NotPd {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("singular {what}: {detail}")]
    Singular { what: &'static str, detail: String },

    #[error("ill-conditioned {what}: condition number {condition:.3e}")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error("pillars do not span the vega/vanna/volga space")]
    PillarsDoNotSpan,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} is undefined for this input")]
    Undefined(&'static str),

    #[error("geodesic integration failed at step {step} (t = {t:.6}): {reason}")]
    Geodesic { step: usize, t: f64, reason: String },

    #[error("on {date}: {source}")]
    AtDate { date: Date, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at(self, date: Date) -> Self {
        Error::AtDate {
            date,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
