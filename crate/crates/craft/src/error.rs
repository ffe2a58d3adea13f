use std::path::PathBuf;

use thiserror::Error;

/// Malformed bytes, located by offset.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("truncated at byte {offset}: need {needed} more bytes for {what}")]
    Truncated { offset: usize, needed: usize, what: &'static str },
    #[error("non-finite value at byte {offset}")]
    NonFinite { offset: usize },
    #[error("invalid {what} at byte {offset}: {detail}")]
    Invalid { offset: usize, what: &'static str, detail: String },
}

#[derive(Debug, Error)]
pub enum CraftError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Core(#[from] craft_core::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CraftError {
    /// 0 success, 1 usage, 2 data or format, 3 failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CraftError::Usage(_) => 1,
            CraftError::Core(craft_core::Error::Usage(_) | craft_core::Error::Parameter(_)) => 1,
            CraftError::CheckFailed(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CraftError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CraftError> = std::result::Result<T, E>;
