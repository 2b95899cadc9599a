use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("material error: {0}")]
    Material(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAborted { epoch: u64, reason: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Material(_) => "material",
            Error::Numeric(_) => "numeric",
            Error::Autodiff(_) => "autodiff",
            Error::TrainingAborted { .. } => "training-aborted",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Unsupported(_) => "unsupported",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
