use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no data: {0}")]
    NoData(String),
    #[error("duplicate checkpoint step {step} for task `{task_id}`")]
    DuplicateCheckpoint { task_id: String, step: u64 },
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },
    /// Token not in the vocabulary. Evaluators count the item as skipped.
    #[error("out-of-vocabulary token `{0}`")]
    OutOfVocabulary(String),
    #[error("backend cannot {0}")]
    Capability(String),
    #[error("relative threshold undefined: series maximum {max} is not positive")]
    UndefinedThreshold { max: f64 },
    #[error("metric requires raw scores but the series is smoothed")]
    SmoothedInput,
    #[error("series share {shared} step(s); at least 2 are required")]
    InsufficientOverlap { shared: usize },
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
