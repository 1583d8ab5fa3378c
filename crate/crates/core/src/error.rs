use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal of {len} samples is shorter than one {frame}-sample frame")]
    TooShort { len: usize, frame: usize },

    #[error("shape mismatch: {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("inconsistent spectrogram metadata: {0}")]
    Metadata(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("invalid network spec at {layer}: {reason}")]
    Spec { layer: String, reason: String },

    #[error("zero-energy {0} signal")]
    ZeroEnergy(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("non-finite gradient for `{param}` during {phase} step")]
    NonFinite { param: String, phase: &'static str },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("PESQ plugin failed: {0}")]
    Plugin(String),

    #[error("wav {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
