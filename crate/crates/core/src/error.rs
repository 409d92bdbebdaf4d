use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum HoloError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error("internal graph error: {0}")]
    Graph(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HoloError>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> HoloError {
    HoloError::Dimension {
        op,
        detail: detail.into(),
    }
}
