use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("vocabulary {path}: {reason}")]
    Vocab { path: PathBuf, reason: String },

    #[error("invalid tokenizer profile: {0}")]
    Profile(String),

    #[error("font {font}: {reason}")]
    Font { font: String, reason: String },

    #[error("invalid render config: {0}")]
    RenderConfig(String),

    #[error("context is empty")]
    EmptyContext,

    #[error("png encoding failed: {0}")]
    Png(String),

    #[error("invalid encoder profile: {0}")]
    EncoderProfile(String),

    #[error("ratio undefined: {0}")]
    Ratio(String),

    #[error("invalid filter parameters: {0}")]
    Filter(String),

    #[error("scorer failed: {0}")]
    Scorer(String),

    #[error(transparent)]
    Endpoint(#[from] crate::harness::EndpointError),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
