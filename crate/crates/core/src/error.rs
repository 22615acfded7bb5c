use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingFile: {path}")]
    MissingFile { path: PathBuf },
    #[error("UnsupportedFormat: {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("CorruptHeader: {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },
    #[error("IoFailure: {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("BadMagic: {path}: found {found}")]
    BadMagic { path: PathBuf, found: f32 },
    #[error("SizeMismatch: {0}")]
    SizeMismatch(String),
    #[error("DegenerateSize: {width}x{height} is below the 8x8 minimum")]
    DegenerateSize { width: usize, height: usize },
    #[error("OrderOutOfRange: alpha = {0} must lie in (0, 1)")]
    OrderOutOfRange(f64),
    #[error("NonFiniteInput: {0}")]
    NonFiniteInput(&'static str),
    #[error("NonFiniteDivergence: field became non-finite at iteration {iteration}")]
    NonFiniteDivergence { iteration: usize },
    #[error("TooFewPixels: {count} pixels for {k} components (need at least {need})")]
    TooFewPixels { count: usize, k: usize, need: usize },
    #[error("DegenerateMixture: {0}")]
    DegenerateMixture(String),
    #[error("NotColor: expected 3 channels, found {0}")]
    NotColor(usize),
    #[error("EmptyMask: no valid pixels to average over")]
    EmptyMask,
    #[error("NoValidGradients: no pixel reaches the gradient floor {0}")]
    NoValidGradients(f64),
    #[error("TooSmall: {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("InvalidParameter: {key}: {reason}")]
    InvalidParameter { key: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
