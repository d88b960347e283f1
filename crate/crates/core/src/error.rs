use std::path::PathBuf;

/// Errors raised anywhere in the tagging engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),

    #[error("audio contains no samples")]
    EmptyAudio,

    #[error("audio too short: need at least {needed} {unit}, got {got}")]
    AudioTooShort {
        needed: usize,
        got: usize,
        unit: &'static str,
    },

    #[error("degenerate mel band: filters {first} and {second} both peak at FFT bin {bin}")]
    DegenerateBand {
        first: usize,
        second: usize,
        bin: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by {0}")]
    NumericFault(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("bad magic: expected \"MCN1\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("corrupt manifest: {0}")]
    ManifestCorrupt(String),

    #[error("payload truncated: expected {expected} bytes, found {actual}")]
    PayloadTruncated { expected: usize, actual: usize },

    #[error("unknown model {name:?}; valid names: {}", valid.join(", "))]
    UnknownModel { name: String, valid: Vec<String> },

    #[error("topN must be in 1..={n_tags}, got {top_n}")]
    TopNOutOfRange { top_n: usize, n_tags: usize },

    #[error("unknown feature key {key:?}; available: {}", available.join(", "))]
    UnknownFeatureKey { key: String, available: Vec<String> },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("labels must contain both positives and negatives")]
    DegenerateLabels,

    #[error("labels contain no positives")]
    NoPositives,

    #[error("every label column is degenerate")]
    AllColumnsDegenerate,

    #[error("invalid dataset manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
