use std::io;

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum EccError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EccError>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(EccError::Argument(msg.into()))
}
