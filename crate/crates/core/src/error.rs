use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error kinds shared across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Training diverged or produced a non-finite loss. The loss trace up to
    /// the failure and, where available, the last good model checkpoint in
    /// text form are attached.
    #[error("training error: {msg} (after {} trace entries)", trace.len())]
    Training {
        msg: String,
        trace: Vec<f64>,
        checkpoint: Option<String>,
    },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn training(msg: impl Into<String>, trace: Vec<f64>) -> Self {
        Error::Training {
            msg: msg.into(),
            trace,
            checkpoint: None,
        }
    }

    pub(crate) fn training_at(msg: impl Into<String>, trace: Vec<f64>, checkpoint: String) -> Self {
        Error::Training {
            msg: msg.into(),
            trace,
            checkpoint: Some(checkpoint),
        }
    }
}
