use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("width mismatch: expected {expected} columns, found {found} ({context})")]
    WidthMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("duplicate cell id `{0}`")]
    DuplicateCellId(String),

    #[error("label `{label}` is not in label space {space}")]
    LabelOutsideSpace { label: String, space: String },

    #[error("class index {index} is out of range for label space {space}")]
    UnknownClassIndex { index: usize, space: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("column `{0}` has no observed values")]
    FullyMissingColumn(String),

    #[error("column `{column}` is log-transformed but row {row} holds non-positive value {value}")]
    NonPositiveLogValue {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("class `{class}` has {count} members, need at least {required}")]
    ClassTooSmall {
        class: String,
        count: usize,
        required: usize,
    },

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checksum mismatch: manifest says {expected}, content hashes to {actual}")]
    Checksum { expected: String, actual: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable class name, used by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::WidthMismatch { .. } => "width_mismatch",
            Error::DuplicateCellId(_) => "duplicate_cell_id",
            Error::LabelOutsideSpace { .. } => "label_space",
            Error::UnknownClassIndex { .. } => "unknown_class",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::FullyMissingColumn(_) => "fully_missing_column",
            Error::NonPositiveLogValue { .. } => "non_positive_log_value",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Checksum { .. } => "checksum",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json { .. } => "json",
            Error::Parse { .. } => "parse",
        }
    }
}
