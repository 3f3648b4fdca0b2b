use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at step {step}: {snapshot}")]
    Training { step: usize, snapshot: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("flat tail: all {0} tail distances are equal")]
    FlatTail(usize),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { op, detail: detail.into() }
    }

    /// Errors that come from bad user input rather than from a numerical
    /// failure at runtime. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Contract(_)
                | Error::UnknownClass(_)
                | Error::Invalid(_)
                | Error::Format(_)
                | Error::Io(_)
        )
    }
}
