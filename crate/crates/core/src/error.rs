use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MiriError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MiriError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("parse error: {0}")]
    Format(String),

    #[error("preprocessing error for feature `{feature}`: {message}")]
    Preprocess { feature: String, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("ODE solver produced a non-finite state at Euler step {step}")]
    Solver { step: usize },

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<MiriError>,
    },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MiriError {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        MiriError::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    /// Short machine-readable category, used by the CLI for its one-line error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            MiriError::Parse { .. } | MiriError::Format(_) => "parse",
            MiriError::Preprocess { .. } => "preprocess",
            MiriError::Shape { .. } => "shape",
            MiriError::Config(_) => "config",
            MiriError::Training { .. } => "training",
            MiriError::Solver { .. } => "solver",
            MiriError::Iteration { source, .. } => source.kind(),
            MiriError::Metric(_) => "metric",
            MiriError::Checkpoint(_) => "checkpoint",
            MiriError::Io { .. } => "io",
        }
    }

    /// True for errors caused by bad input or configuration rather than a numeric failure.
    pub fn is_usage(&self) -> bool {
        match self {
            MiriError::Config(_) => true,
            MiriError::Iteration { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
