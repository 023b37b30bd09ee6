use thiserror::Error;

/// Errors produced by the mining, scoring and prediction stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown event type `{symbol}` in region `{region}`")]
    UnknownEventType { symbol: String, region: String },

    #[error("expected support is zero for pattern {0}")]
    ZeroExpectation(String),

    #[error("spatial proximity is inapplicable: {0}")]
    Inapplicable(String),

    #[error("synthetic spec validation failed: {0}")]
    Spec(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("missing artifact `{artifact}`: run stage `{stage}` first")]
    MissingArtifact { artifact: String, stage: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    /// Wraps this error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
