use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("empty attention context")]
    EmptyContext,
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("non-finite values after {attempts} attempts")]
    NonFinite { attempts: usize },
    #[error("column error: {0}")]
    Column(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported class count {got} (maximum {max})")]
    UnsupportedClassCount { got: usize, max: usize },
    #[error("cache mismatch: {0}")]
    CacheMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
