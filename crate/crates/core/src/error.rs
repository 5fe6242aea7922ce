use std::path::PathBuf;

use thiserror::Error;

/// Failures when decoding one of the binary containers (`OGMS`, `LATS`, checkpoints).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("decode error in {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: DecodeError,
    },
    #[error(transparent)]
    Format(#[from] DecodeError),
    #[error("missing counterpart sequences: {0:?}")]
    MissingSequences(Vec<String>),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("non-finite loss at step {step}: {what}")]
    NonFinite { step: usize, what: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the data (files, formats, counterparts),
    /// as opposed to configuration or numerical problems.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Decode { .. }
                | Error::Format(_)
                | Error::MissingSequences(_)
                | Error::CheckpointMismatch(_)
                | Error::Io { .. }
                | Error::Shape(_)
                | Error::Csv(_)
                | Error::Image(_)
        )
    }
}
