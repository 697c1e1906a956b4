//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

use crate::checkpoint::Checkpoint;

pub type Result<T, E = DpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DpError {
    /// Invalid hyperparameter, shape, or configuration field.
    #[error("configuration error: {0}")]
    Config(String),

    /// Config file schema violations, one entry per offending field path.
    #[error("invalid config: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<SchemaError>),

    /// Malformed input file; `offset` is the byte position where parsing failed.
    #[error("format error in {path}: {message} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Well-formed input with invalid content (e.g. a label out of range).
    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error in {location}: {message}")]
    Numerical { location: String, message: String },

    #[error("calibration error: {0}")]
    Calibration(String),

    /// Training produced a non-finite loss. The state at the failing step is attached.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged {
        step: u64,
        loss: f64,
        dump: Box<Checkpoint>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl DpError {
    pub fn config(msg: impl Into<String>) -> Self {
        DpError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category name, used by the CLI when reporting failures.
    pub fn category(&self) -> &'static str {
        match self {
            DpError::Config(_) | DpError::Schema(_) => "config",
            DpError::Format { .. } => "format",
            DpError::Data(_) => "data",
            DpError::Numerical { .. } | DpError::Diverged { .. } => "numerical",
            DpError::Calibration(_) => "calibration",
            DpError::Internal(_) => "internal",
            DpError::Io { .. } | DpError::Csv(_) => "io",
        }
    }

    /// Process exit code for the category (0 is reserved for success).
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "format" => 4,
            "data" => 5,
            "numerical" => 6,
            "calibration" => 7,
            _ => 70,
        }
    }
}

/// A single schema violation in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    /// Dotted field path, e.g. `training.learning_rate`.
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}
