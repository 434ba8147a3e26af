use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("corrupt RLE: {0}")]
    CorruptRle(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("windows from more than one sequence: {0:?}")]
    MixedSequence(Vec<String>),

    #[error("stage `{stage}` is missing verdicts for {missing:?}")]
    IncompleteStage { stage: String, missing: Vec<String> },

    #[error("frame {frame} outside window `{window_id}` [{start}, {end}]")]
    FrameRange {
        window_id: String,
        frame: u64,
        start: u64,
        end: u64,
    },

    #[error("requested {requested} frames from a window of {available}")]
    TooManyFrames { requested: usize, available: u64 },

    #[error("invalid track prompt: {0}")]
    InvalidPrompt(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("benchmark build failed: {0}")]
    Build(String),

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("gateway: {0}")]
    Gateway(#[from] crate::gateway::GatewayError),

    #[error("review: {0}")]
    Review(#[from] crate::review::ReviewError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
