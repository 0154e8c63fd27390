use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("slice index {index} out of range for a stack of {count} slices")]
    SliceIndex { index: usize, count: usize },

    #[error("insufficient history: need at least {need} stacks, got {have}")]
    InsufficientHistory { need: usize, have: usize },

    #[error("end of stream")]
    EndOfStream,

    #[error("source closed")]
    Closed,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("tiff: {0}")]
    Tiff(#[from] tiff::TiffError),

    #[error("png: {0}")]
    Png(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
