use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input. `offset` is a byte offset for binary input and a
    /// 1-based line number for text input.
    #[error("parse error at {unit} {offset}: {message}")]
    Parse {
        unit: &'static str,
        offset: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ordering error: time decreased from {previous} to {current} ticks")]
    Ordering { previous: u64, current: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("histogram axes differ: {0}")]
    AxisMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse_bytes(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            unit: "byte",
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn parse_line(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            unit: "line",
            offset: line,
            message: message.into(),
        }
    }
}
