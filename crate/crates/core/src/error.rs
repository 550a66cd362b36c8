use thiserror::Error;

use crate::instance::ValidationReport;
use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(ValidationReport),

    #[error("failed to parse instance: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("patience model mismatch: expected {expected}, found {found}")]
    WrongPatience {
        expected: &'static str,
        found: &'static str,
    },

    #[error("arrival model mismatch: expected {expected}, found {found}")]
    ArrivalMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("{what} too large: {size} exceeds cap {cap}")]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Lp(#[from] LpError),
}

impl Error {
    pub(crate) fn too_large(what: &'static str, size: usize, cap: usize) -> Self {
        Error::TooLarge { what, size, cap }
    }
}
