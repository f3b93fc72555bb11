use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("miscoverage level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("score kind {0} does not support this operation")]
    UnsupportedScore(&'static str),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("split role violation: {0}")]
    RoleViolation(String),
    #[error("bin {bin} is empty")]
    EmptyBin { bin: usize },
    #[error("negative density {value} encountered at {at}")]
    NegativeDensity { value: f64, at: f64 },
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
