//! CLI error type with stable machine-readable codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad magic bytes (not a cube file)")]
    BadMagic,
    #[error("unsupported cube file version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("cube file truncated")]
    Truncated,
    #[error("cube file checksum mismatch")]
    CrcMismatch,
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("incompatible dimensions: {0}")]
    IncompatibleDims(String),
    #[error("unknown task: {0}")]
    UnknownTask(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] hsi_core::CoreError),
}

impl CliError {
    /// Stable code emitted in the error JSON on stderr.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::BadMagic => "bad_magic",
            CliError::UnsupportedVersion(_) => "unsupported_version",
            CliError::UnsupportedDtype(_) => "unsupported_dtype",
            CliError::Truncated => "truncated",
            CliError::CrcMismatch => "crc_mismatch",
            CliError::MissingFile(_) => "missing_file",
            CliError::IncompatibleDims(_) => "incompatible_dims",
            CliError::UnknownTask(_) => "unknown_task",
            CliError::InvalidArgument(_) => "invalid_argument",
            CliError::Io(_) => "io",
            CliError::Core(_) => "core",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
