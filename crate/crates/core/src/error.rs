use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("tap output `{0}` does not exist in the graph")]
    UnknownTap(String),

    #[error("tap `{layer}` has {found} channels, spec declares {expected} (stale or wrong export?)")]
    ChannelMismatch {
        layer: String,
        expected: usize,
        found: usize,
    },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("not a feature cache")]
    NotACache,

    #[error("unsupported feature cache version {0}")]
    CacheVersion(u32),

    #[error("truncated feature cache: {0}")]
    CacheTruncated(String),

    #[error("duplicate image id `{0}`")]
    DuplicateId(String),

    #[error("{0}")]
    MissingFeatures(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Factorization(_) | Error::UndefinedCorrelation(_) => 3,
            Error::Io { .. }
            | Error::Image(_)
            | Error::Inference(_)
            | Error::NotACache
            | Error::CacheVersion(_)
            | Error::CacheTruncated(_)
            | Error::MissingFeatures(_) => 2,
            _ => 1,
        }
    }
}
