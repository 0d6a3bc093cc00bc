use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("file size {size} is not a multiple of {record} bytes (dim {dim})")]
    SizeMismatch { size: u64, record: u64, dim: usize },

    #[error("non-finite value in series {id} (byte offset {offset})")]
    NonFinite { id: usize, offset: u64 },

    #[error("series id {id} out of range for dataset of {count} series")]
    OutOfBounds { id: usize, count: usize },

    #[error("bad magic bytes in index stream")]
    BadMagic,

    #[error("unsupported index format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("{what} checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch {
        what: &'static str,
        stored: u32,
        computed: u32,
    },

    #[error("truncated index stream: {0}")]
    Truncated(&'static str),

    #[error("corrupt index stream: {0}")]
    Corrupt(String),

    #[error("raw data integrity: {0}")]
    Integrity(String),

    #[error("invalid state: {0}")]
    State(&'static str),

    #[error("incompatible measure: {0}")]
    IncompatibleMeasure(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
