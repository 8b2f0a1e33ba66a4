use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at epoch {epoch}, last finite loss {last_finite_loss:?}")]
    Diverged {
        epoch: usize,
        last_finite_loss: Option<f64>,
    },

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Failures while reading a container from disk.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: bad magic {found:?}, expected \"WIOM\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {found}")]
    UnsupportedVersion { path: PathBuf, found: u16 },

    #[error("{path}: unknown dtype tag {found}")]
    UnknownDtype { path: PathBuf, found: u8 },

    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: trailing bytes after payload ({extra})")]
    TrailingBytes { path: PathBuf, extra: u64 },

    #[error("{path}: checksum mismatch, metadata says {expected}, file hashes to {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {reason}")]
    Metadata { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
