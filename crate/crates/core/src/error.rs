use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("augmentation error: {0}")]
    Augmentation(String),

    #[error("protocol error: {remaining} remaining classes (K={classes}, B={init}) cannot be split into {steps} equal steps")]
    Protocol {
        init: usize,
        steps: usize,
        classes: usize,
        remaining: usize,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("exemplar-free violation: {0}")]
    ExemplarFree(String),

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end: 2 for configuration
    /// problems, 3 for data problems, 4 for everything that fails at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Protocol { .. } => 2,
            Error::Format { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Corruption(_) => 3,
            _ => 4,
        }
    }
}
