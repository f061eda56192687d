use std::io;

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("symmetry error: {0}")]
    Symmetry(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("stability error: effective relaxation time {tau_eff} <= 0.5 at cell {cell:?}")]
    Stability { cell: Vec<usize>, tau_eff: f64 },

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checksum mismatch in {what}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        what: String,
        stored: u32,
        computed: u32,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invariant {name} violated: {detail}")]
    Invariant { name: String, detail: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn symmetry(msg: impl Into<String>) -> Self {
        Error::Symmetry(msg.into())
    }
}
