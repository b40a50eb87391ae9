//! Error type shared by every pipeline stage.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate message id {id:?}")]
    DuplicateId { id: String },

    #[error("dataset {name:?} has {n} messages; at least 5 are required to split")]
    TooSmallToSplit { name: String, n: usize },

    #[error("dataset {name:?} mixes records with and without a predefined split")]
    PartialPredefinedSplit { name: String },

    #[error("dataset {name:?} has no split; call split() first")]
    NotSplit { name: String },

    #[error("predefined split of dataset {name:?} is invalid: {message}")]
    InvalidPredefinedSplit { name: String, message: String },

    #[error("unknown corpus {name:?}")]
    UnknownCorpus { name: String },

    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{0}")]
    InvalidConfig(String),

    #[error("training split of dataset {name:?} contains a single class")]
    SingleClassTraining { name: String },

    #[error("line {line}: positive probability {value} outside [0, 1]")]
    ScoreOutOfRange { line: usize, value: f64 },

    #[error("score file for classifier {classifier:?} references unknown ids: {}", ids.join(", "))]
    UnknownScoreIds { classifier: String, ids: Vec<String> },

    #[error("classifier {classifier:?} is missing scores for ids: {}", ids.join(", "))]
    MissingScores { classifier: String, ids: Vec<String> },

    #[error("no scores available for classifier {classifier:?} on dataset {dataset:?}")]
    MissingScoreSource { classifier: String, dataset: String },

    #[error("AUC needs both classes but the truth set has only one")]
    SingleClassAuc,

    #[error("score ids and truth ids differ: {message}")]
    IdMismatch { message: String },

    #[error("similarity matrix and grid disagree on dataset names: {message}")]
    NameMismatch { message: String },

    #[error("id collision after namespacing: {id:?}")]
    MergeIdCollision { id: String },

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("model file {path}: {message}")]
    BadModelFile { path: String, message: String },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
