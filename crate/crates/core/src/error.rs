use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown topology `{0}` (expected mesh, line, star, tree or explicit)")]
    UnknownTopology(String),

    #[error("nodes `{from}` and `{to}` are not connected")]
    Disconnected { from: String, to: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration refused: {estimated} options exceed the limit of {limit}")]
    EnumerationLimit { estimated: u128, limit: u128 },

    #[error("search stopped after {0} iterations without finishing")]
    IterationLimit(usize),

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}
