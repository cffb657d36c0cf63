use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode is done; call reset before stepping")]
    EpisodeDone,

    #[error("action index {index} out of range for {count} actions")]
    InvalidAction { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("malformed response from {endpoint}: {message}")]
    MalformedResponse { endpoint: String, message: String },

    #[error("no cached thought for situation {situation:?}, prompt {prompt_id}")]
    CacheMiss { situation: String, prompt_id: usize },

    #[error("cache conflict for key {0:?}: entries are immutable")]
    CacheConflict(String),

    #[error("remote completion was empty")]
    EmptyCompletion,

    #[error("expected {expected} prompts, parsed {found}; raw completion:\n{raw}")]
    PromptParse {
        expected: usize,
        found: usize,
        raw: String,
    },

    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: String, detail: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("episode aborted after {steps} steps: {source}")]
    EpisodeAborted {
        steps: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
            detail: detail.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::MissingFile(_) => "missing_file",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EpisodeDone => "episode_done",
            Error::InvalidAction { .. } => "invalid_action",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Transport { .. } => "transport",
            Error::MalformedResponse { .. } => "malformed_response",
            Error::CacheMiss { .. } => "cache_miss",
            Error::CacheConflict(_) => "cache_conflict",
            Error::EmptyCompletion => "empty_completion",
            Error::PromptParse { .. } => "prompt_parse",
            Error::NonFinite { .. } => "non_finite",
            Error::CheckpointMismatch(_) => "checkpoint_mismatch",
            Error::EpisodeAborted { .. } => "episode_aborted",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
