use std::io;

use thiserror::Error;

use crate::data::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-positive distance {0} passed to the LID estimator")]
    NonPositiveDistance(f64),

    #[error(
        "class {class}: {attacked} attacked and {benign} benign samples, \
         need at least {required} of each to estimate attack densities"
    )]
    InsufficientAttackSignal {
        class: Label,
        attacked: usize,
        benign: usize,
        required: usize,
    },

    #[error("linear system is singular")]
    Singular,

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
