use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("degenerate embedding: row {row} has zero norm")]
    DegenerateEmbedding { row: usize },

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (ce={ce}, intra={intra})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        ce: f64,
        intra: f64,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
