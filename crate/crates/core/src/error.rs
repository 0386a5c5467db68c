use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {path}: {message}")]
    Malformed { line: usize, path: String, message: String },

    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateDocument { line: usize, id: String },

    #[error("line {line}: duplicate passage id `{id}`")]
    DuplicatePassage { line: usize, id: String },

    #[error("line {line}: duplicate entity id `{id}`")]
    DuplicateEntity { line: usize, id: String },

    #[error("line {line}: {path}: mention references unknown entity `{entity}`")]
    UnknownMentionEntity { line: usize, path: String, entity: String },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown passage `{0}`")]
    UnknownPassage(String),

    #[error("passage `{0}` is not a node of this graph")]
    UnknownNode(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding record {index}: {message}")]
    EmbeddingRecord { index: usize, message: String },

    #[error("no embedding for passage `{0}`")]
    MissingPassageVector(String),

    #[error("no embedding for query `{0}`")]
    MissingQueryVector(String),

    #[error("no embedding for augmented query (query `{query}`, prefix passage `{passage}`)")]
    MissingAugmentedVector { query: String, passage: String },

    #[error("no similarity for passage `{0}`")]
    MissingSimilarity(String),

    #[error("invalid training sample: {0}")]
    InvalidSample(String),

    #[error("embedding service: {0}")]
    Service(String),

    #[error("store at {path}: {message}")]
    Store { path: PathBuf, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
