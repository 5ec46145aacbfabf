//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("state error: {0}")]
    State(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("imputation error: column {0} has no non-missing values")]
    Imputation(String),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("extent error: {0}")]
    Extent(String),
    #[error("unknown registry entry '{name}': supported are {supported}")]
    Registry { name: String, supported: String },
    #[error("dependency error: {0}")]
    Dependency(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("leakage error: {0}")]
    Leakage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code contract: 0 success, 2 I/O, 3 validation, 4 convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::Format { .. } => 2,
            Error::Convergence(_) => 4,
            _ => 3,
        }
    }
}
