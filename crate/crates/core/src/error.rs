use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: PathBuf, column: &'static str },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: expected step {expected}, found {found} (non-uniform spacing)")]
    Spacing { row: usize, expected: i64, found: i64 },

    #[error("row {row}: {field} = {value} is outside its valid domain")]
    Domain {
        row: usize,
        field: &'static str,
        value: f64,
    },

    #[error("channel `{0}` has a degenerate (constant) range")]
    DegenerateRange(&'static str),

    #[error("channel `{0}` is not covered by the normalization parameters")]
    MissingChannel(&'static str),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too few calibration samples: {found} (need at least {required})")]
    TooFewSamples { found: usize, required: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("differences have zero variance; t statistic undefined")]
    ZeroVariance,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// Stable machine-readable category, used by the CLI for error reporting and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. }
            | Error::Parse { .. }
            | Error::Spacing { .. }
            | Error::Domain { .. } => "ingestion",
            Error::DegenerateRange(_) | Error::MissingChannel(_) => "normalization",
            Error::InvalidSplit(_) => "split",
            Error::Config { .. } => "config",
            Error::Shape(_) | Error::EmptyDataset | Error::NonFiniteLoss { .. } => "model",
            Error::ModelFormat(_) => "model-file",
            Error::InvalidArgument(_)
            | Error::TooFewSamples { .. }
            | Error::LengthMismatch { .. } => "argument",
            Error::ZeroVariance => "statistics",
            Error::Io { .. } => "io",
            Error::Serialization(_) => "serialization",
        }
    }

    /// Process exit status for this error's category (10 and up; clap uses 2).
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "ingestion" => 10,
            "normalization" => 11,
            "split" => 12,
            "config" => 13,
            "model" => 14,
            "model-file" => 15,
            "argument" => 16,
            "statistics" => 17,
            "io" => 18,
            _ => 19,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
