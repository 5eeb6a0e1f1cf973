use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },

    #[error("invalid field value {value} at row {row}, col {col}")]
    InvalidValue { row: usize, col: usize, value: f64 },

    #[error("transmitter set is empty")]
    EmptyTransmitterSet,

    #[error("infeasible coverage target {target}: the full candidate set only reaches {bound}")]
    InfeasibleTarget { target: f64, bound: f64 },

    #[error("enumeration needs {required} subsets but the cap is {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("problem mismatch: {0}")]
    ProblemMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Short stable name for the failure class, used for CLI diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_)
            | Error::GridMismatch { .. }
            | Error::InvalidValue { .. }
            | Error::EmptyTransmitterSet
            | Error::ProblemMismatch(_) => "validation",
            Error::Io { .. } => "io",
            Error::InfeasibleTarget { .. } => "infeasible-target",
            Error::CapExceeded { .. } => "cap-exceeded",
            Error::Unsupported(_) | Error::Refused(_) => "unsupported",
        }
    }
}
