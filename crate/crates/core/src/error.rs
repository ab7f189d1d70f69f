use std::path::PathBuf;

use crate::ids::{ClassId, InstanceId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("format error in {}: {msg}", file.display())]
    Format { file: PathBuf, msg: String },

    #[error("data error at row {row}: {msg}")]
    Data { row: usize, msg: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("pool has {have} classes, episode needs {need}")]
    NotEnoughClasses { have: usize, need: usize },

    #[error("class {class} has {have} instances, episode needs {need}")]
    Sampling { class: ClassId, have: usize, need: usize },

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    #[error("instance {0} is not in the unlabeled set")]
    InvalidSelection(InstanceId),

    #[error("budget of {0} queries exhausted")]
    BudgetExhausted(usize),

    #[error("classifier undefined: no labeled examples")]
    UndefinedClassifier,

    #[error("no unlabeled candidates")]
    NoCandidates,

    #[error("policy `{0}` is not supported in the cold-start setting")]
    UnsupportedColdStart(String),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(file: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { file: file.into(), msg: msg.into() }
    }
}
