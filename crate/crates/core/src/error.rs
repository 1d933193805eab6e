use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: malformed JSON: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("answer span does not match context for ids: {}", ids.join(", "))]
    AnswerMismatch { ids: Vec<String> },

    #[error("line {line}: missing or invalid field `{field}`")]
    MissingField { line: usize, field: String },

    #[error("duplicate pair id `{0}`")]
    DuplicateId(String),

    #[error("invalid pair `{id}`: {reason}")]
    InvalidPair { id: String, reason: String },

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("generation failed for pair {index}: retry budget exhausted")]
    Generation { index: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("histogram bin edges do not match")]
    EdgeMismatch,

    #[error("invalid bin edges: {0}")]
    InvalidEdges(String),

    #[error("weight cap must be positive, got {0}")]
    InvalidCap(f64),

    #[error("prefix distributions use different phrase lengths ({0} vs {1})")]
    PrefixWidthMismatch(usize, usize),

    #[error("missing predictions for ids: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no valid answer position")]
    NoValidPosition,

    #[error("gold position {position} outside context span {first}..={last}")]
    GoldOutsideSpan {
        position: usize,
        first: usize,
        last: usize,
    },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("weight list has {got} entries, corpus has {expected}")]
    WeightLength { expected: usize, got: usize },

    #[error("invalid weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("no usable training examples")]
    NoUsableExamples,

    #[error("subset of {fraction}% is empty for a corpus of {n} pairs")]
    EmptySubset { fraction: f64, n: usize },

    #[error("invalid subset plan: {0}")]
    Plan(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// True for failures that happen while optimizing, as opposed to bad
    /// input data.
    pub fn is_runtime(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } | Error::NoUsableExamples | Error::Experiment(_) => true,
            Error::Cell { source, .. } => source.is_runtime(),
            _ => false,
        }
    }
}
