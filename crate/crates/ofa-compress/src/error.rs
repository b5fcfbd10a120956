//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty sequence: {0}")]
    Empty(String),

    #[error("lambda {0} outside [0, 2)")]
    LambdaRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("node {0} is not recorded on this graph")]
    Unrecorded(usize),

    #[error("backward requires a scalar loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at step {step}: loss = {value}")]
    Divergence { step: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config/usage, 3 data/IO, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidArg(_) | Error::LambdaRange(_) => 2,
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated(_)
            | Error::Length(_)
            | Error::Empty(_) => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}
