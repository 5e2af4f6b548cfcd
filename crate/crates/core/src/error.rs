use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),

    #[error("unknown doc_id `{0}`")]
    UnknownDocId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty token sequence")]
    EmptySequence,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("vocabulary mismatch: model has {model} entries, corpus has {corpus}")]
    VocabMismatch { model: usize, corpus: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("non-finite loss in batch with documents {doc_ids:?}")]
    NonFiniteLoss { doc_ids: Vec<String> },

    #[error("non-finite parameter in {tensor} after optimizer step")]
    NonFiniteParameter { tensor: &'static str },

    #[error("not enough distinct documents to form a contrastive batch ({0} found, need 2)")]
    TooFewDocuments(usize),

    #[error("no usable training batches")]
    NoBatches,

    #[error("metric is NaN")]
    NanMetric,

    #[error("corpus has no topic labels")]
    MissingTopicLabels,

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("lock held: {0} exists (another run is using this directory)")]
    Locked(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
