use thiserror::Error;

use crate::data::Subject;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Model,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("no tokens")]
    NoTokens,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("embedding contains non-finite values")]
    NonFinite,

    #[error("unknown subject {0:?} (expected one of XYZ, KVA, NOG, DTK)")]
    UnknownSubject(String),

    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate question id {0:?}")]
    DuplicateId(String),

    #[error("question {0:?} has empty text")]
    EmptyText(String),

    #[error("unknown question id {0:?}")]
    UnknownQuestion(String),

    #[error("degenerate embedding (zero norm)")]
    DegenerateEmbedding,

    #[error("no questions of subject {0}")]
    EmptySubject(Subject),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("subject {subject}: {n} samples is fewer than k = {k} components")]
    TooFewSamples { subject: Subject, k: usize, n: usize },

    #[error("non-finite likelihood in component {component}")]
    NonFiniteLikelihood { component: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("missing {model} for {subject}")]
    MissingModel { model: &'static str, subject: Subject },

    #[error("no routable strategy")]
    NoRoutableStrategy,

    #[error("data consistency: {0}")]
    Consistency(String),

    #[error("{file} row {row}: {message}")]
    Csv { file: String, row: usize, message: String },

    #[error("{0}")]
    Fixture(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::UnknownStrategy(_) => ErrorKind::Usage,
            Error::TooFewSamples { .. }
            | Error::NonFiniteLikelihood { .. }
            | Error::Model(_)
            | Error::MissingModel { .. }
            | Error::NoRoutableStrategy => ErrorKind::Model,
            _ => ErrorKind::Data,
        }
    }
}
