use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: unknown category `{category}`")]
    UnknownCategory { line: usize, category: String },

    #[error("invalid model file: {0}")]
    Format(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("non-finite loss at record {record}")]
    NonFiniteLoss { record: u64 },

    #[error("label space mismatch: {0}")]
    LabelSpaceMismatch(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("step `{step}` failed: {source}")]
    Step {
        step: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
