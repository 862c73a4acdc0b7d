use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entity `{0}` already exists with different fields")]
    Conflict(String),

    #[error("statement references unknown entity `{0}`")]
    Referential(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid pair: `{0}` paired with itself")]
    InvalidPair(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown predicate `{0}`")]
    Vocabulary(String),

    #[error("kind error: {0}")]
    Kind(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("label error at line {line}: `{value}` is not one of 0, 0.5, 1")]
    Label { line: usize, value: String },

    #[error("provenance mismatch: datasets built from stores {0} and {1}")]
    Provenance(String, String),

    #[error("incomplete data: {} row(s) without annotation, first {}", .0.len(), .0.first().map(String::as_str).unwrap_or("-"))]
    IncompleteData(Vec<String>),

    #[error("unsupported table: {0}")]
    UnsupportedTable(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("shape error: expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            Error::NotFound(_) | Error::Referential(_) => ErrorCode::NotFound,
            Error::Conflict(_) | Error::Provenance(..) => ErrorCode::Conflict,
            Error::Parse { .. }
            | Error::Vocabulary(_)
            | Error::Kind(_)
            | Error::Schema(_)
            | Error::Label { .. }
            | Error::IncompleteData(_)
            | Error::UnsupportedTable(_) => ErrorCode::Schema,
            Error::InvalidPair(_)
            | Error::MissingInput(_)
            | Error::DegenerateData(_)
            | Error::Shape { .. }
            | Error::Parameter(_)
            | Error::Configuration(_) => ErrorCode::Parameter,
            Error::Fold { source, .. } => source.code(),
            Error::Io { .. } | Error::Serialization(_) => ErrorCode::Internal,
        }
    }
}

/// Closed set of error codes carried by every API error body and CLI failure line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    Conflict,
    Schema,
    Parameter,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "not_found",
            ErrorCode::Conflict => "conflict",
            ErrorCode::Schema => "schema",
            ErrorCode::Parameter => "parameter",
            ErrorCode::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl From<&Error> for ApiError {
    fn from(err: &Error) -> Self {
        let detail = match err {
            Error::IncompleteData(rows) => Some(rows.join("; ")),
            Error::Fold { source, .. } => Some(source.to_string()),
            _ => None,
        };
        ApiError {
            code: err.code(),
            message: err.to_string(),
            detail,
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        ApiError::from(&err)
    }
}
