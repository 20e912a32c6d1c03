use thiserror::Error;

/// Errors raised by fitting, transforming, training and parsing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough rows to estimate a decomposition.
    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    /// Training labels contain fewer than two classes.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    /// Malformed input file. The message carries the line or field location.
    #[error("format error: {0}")]
    Format(String),

    /// Benchmark configuration or results-file mismatch.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}

macro_rules! format_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Format(format!($($arg)*))
    };
}

pub(crate) use format_err;
pub(crate) use invalid;
