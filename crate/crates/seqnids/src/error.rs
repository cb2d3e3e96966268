//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library. Operations validate their inputs and
/// report what was wrong rather than panicking.
#[derive(Debug)]
pub enum Error {
    /// Two operands had incompatible shapes.
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A scalar or structural argument was out of its legal range.
    InvalidArgument(String),
    /// A required CSV column was not found in the header.
    MissingColumn(String),
    /// A cell could not be parsed as a number.
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    /// A label cell held a value outside the schema's class set.
    BadLabel {
        row: usize,
        column: String,
        value: String,
    },
    /// The loss function handed to the finite-difference oracle returned
    /// different values for identical inputs.
    NonDeterministicLoss,
    /// A gradient tensor contained NaN or Inf.
    NonFiniteGradient { tensor: String },
    /// A checkpoint or cache file failed structural validation.
    BadFormat(String),
    /// The file was produced under a different feature schema.
    SchemaHashMismatch { expected: u64, got: u64 },
    Io(std::io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => write!(
                f,
                "{op}: shape mismatch, left is {}x{}, right is {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::MissingColumn(name) => write!(f, "missing column `{name}` in CSV header"),
            Error::BadNumber { row, column, value } => {
                write!(f, "row {row}: column `{column}` has unparseable number `{value}`")
            }
            Error::BadLabel { row, column, value } => {
                write!(f, "row {row}: column `{column}` has unknown label `{value}`")
            }
            Error::NonDeterministicLoss => {
                write!(f, "loss function is not deterministic: two evaluations at the same point differ")
            }
            Error::NonFiniteGradient { tensor } => {
                write!(f, "non-finite gradient in tensor `{tensor}`")
            }
            Error::BadFormat(msg) => write!(f, "bad file format: {msg}"),
            Error::SchemaHashMismatch { expected, got } => write!(
                f,
                "schema hash mismatch: file was built for schema {got:#018x}, expected {expected:#018x} \
                 (rebuild the cache/checkpoint with the current schema)"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Csv(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
