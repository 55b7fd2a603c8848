use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Distinct failure codes for audio ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioErrorKind {
    UnsupportedFormat,
    RateMismatch,
    Channels,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty result: {0}")]
    Empty(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("model was fitted for speaker {expected:?}, got data for {found:?}")]
    SpeakerMismatch { expected: String, found: String },

    #[error("{path}: {message}")]
    Audio {
        kind: AudioErrorKind,
        path: PathBuf,
        message: String,
    },

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn in_utterance(self, id: &str) -> Self {
        Error::Utterance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    /// Audio failure code, looking through utterance wrappers.
    pub fn audio_kind(&self) -> Option<AudioErrorKind> {
        match self {
            Error::Audio { kind, .. } => Some(*kind),
            Error::Utterance { source, .. } => source.audio_kind(),
            _ => None,
        }
    }
}
