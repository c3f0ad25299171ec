use std::path::PathBuf;

use thiserror::Error;

use crate::fsmn::ModelError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("unsupported sample rate {found} Hz (expected {expected} Hz; enable resampling to convert)")]
    SampleRate { found: u32, expected: u32 },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("scenario error: {0}")]
    Scenario(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
