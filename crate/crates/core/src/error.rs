use std::path::PathBuf;

/// Errors raised by the mining, training and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("qrel for query `{query_id}` references unknown {kind} id `{id}`")]
    UnknownReference {
        query_id: String,
        kind: &'static str,
        id: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("provider `{model_id}` failed on batch {batch}: {message}")]
    Provider {
        model_id: String,
        batch: usize,
        message: String,
    },

    #[error("missing embedding for `{id}` under model `{model_id}`")]
    MissingEmbedding { model_id: String, id: String },

    #[error("training diverged at epoch {epoch}, step {step}: {message}")]
    Diverged { epoch: usize, step: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
