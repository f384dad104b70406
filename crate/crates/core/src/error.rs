use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Byte 10 of an 11-byte frame was not the 0xFF end-of-message marker.
    #[error("bad end-of-message marker 0x{found:02X} (expected 0xFF)")]
    BadMarker { found: u8 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} outside [{min}, {max}]")]
    Range { value: i64, min: i64, max: i64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("signal too short: {len} samples (need at least {min})")]
    TooShort { len: usize, min: usize },

    #[error("cannot open {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("transport error: {0}")]
    Transport(#[source] std::io::Error),

    #[error("no frame lock for more than {bytes} bytes")]
    SyncLost { bytes: usize },

    #[error("recording is empty")]
    EmptyRecording,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
