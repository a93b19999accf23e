//! Error type shared by every mining stage.

use std::io;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric routine was called outside its domain (empty distribution,
    /// unknown word-piece, degenerate embedding, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input data (JSON files, gold labels, ...).
    #[error("input error: {0}")]
    Input(String),

    /// The embedding service could not be reached or answered badly.
    #[error("transport error: {0}")]
    Transport(String),

    /// The exhaustive partition oracle refuses graphs above its node limit.
    #[error("refused: {nodes} nodes exceeds the exhaustive search limit of {limit}")]
    TooLarge { nodes: usize, limit: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::Io(_) => "E_IO",
            Error::Config(_) => "E_CONFIG",
            Error::Domain(_) => "E_DOMAIN",
            Error::Input(_) => "E_INPUT",
            Error::Transport(_) => "E_TRANSPORT",
            Error::TooLarge { .. } => "E_TOO_LARGE",
            Error::Stage { .. } => unreachable!("root() never returns a stage wrapper"),
        }
    }

    /// Process exit code for the CLI, one per error class.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) => 2,
            Error::Io(_) => 3,
            Error::Input(_) => 4,
            Error::Domain(_) => 5,
            Error::Transport(_) => 6,
            Error::TooLarge { .. } => 7,
            Error::Stage { .. } => unreachable!("root() never returns a stage wrapper"),
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Input(format!("json: {e}"))
    }
}
