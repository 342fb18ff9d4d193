use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("samples out of order: t={later_ms} ms appears after t={earlier_ms} ms")]
    Unsorted { earlier_ms: i64, later_ms: i64 },

    #[error("stream mixes sniffers or devices: expected {expected}, found {found}")]
    MixedStream { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training set contains a single class ({0}); need both labels")]
    SingleClass(String),

    #[error("feature arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("{folds} folds requested but only {devices} devices available")]
    FoldCount { folds: usize, devices: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("schema mismatch in {what}: expected `{expected}`, found `{found}`")]
    Schema { what: String, expected: String, found: String },

    #[error("labels missing for {count} (device, window) pairs, e.g. {examples}")]
    LabelGaps { count: usize, examples: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad configuration or usage rather than bad input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::FoldCount { .. })
    }
}
