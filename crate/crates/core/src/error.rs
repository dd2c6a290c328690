use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QacError {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("split `{0}` is empty; adjust the time boundaries")]
    EmptySplit(&'static str),

    #[error("invalid time boundaries: train_end ({train_end}) must be < valid_end ({valid_end})")]
    InvalidBoundaries { train_end: i64, valid_end: i64 },

    #[error("vocabulary size {requested} is below the minimum {minimum} (alphabet + specials)")]
    VocabTooSmall { requested: usize, minimum: usize },

    #[error(
        "BPE ran out of mergeable pairs after {attained} of {requested} merges; \
         use a vocabulary size of at most {max_vocab}"
    )]
    InsufficientMerges {
        attained: usize,
        requested: usize,
        max_vocab: usize,
    },

    #[error("duplicate token surface `{0}`")]
    DuplicateToken(String),

    #[error("unknown token id {0}")]
    UnknownToken(u32),

    #[error("input of {len} characters exceeds the enumeration limit of {limit}")]
    TooLong { len: usize, limit: usize },

    #[error("exhaustive search limit exceeded: {0}")]
    OracleGuard(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "vocabulary hash mismatch: model was trained against {expected}, segmenter has {found}"
    )]
    VocabMismatch { expected: String, found: String },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QacError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QacError::Io {
            path: path.into(),
            source,
        }
    }
}
