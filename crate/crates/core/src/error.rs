use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("page {width}x{height} is too small: {reason}")]
    PageTooSmall {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("batch size {requested} exceeds split size {available}")]
    BatchTooLarge { requested: usize, available: usize },

    #[error("degenerate raster size {h}x{w}")]
    DegenerateSize { h: usize, w: usize },

    #[error("input {h}x{w} is below the detector footprint of {min}x{min}")]
    BelowFootprint { h: usize, w: usize, min: usize },

    #[error("detector capability `{0}` is not available")]
    MissingCapability(&'static str),

    #[error("unknown feature tap `{0}`")]
    UnknownTap(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("surrogate reached clean recall {achieved:.3}, below the required {required:.3}")]
    InsufficientRecall { achieved: f64, required: f64 },

    #[error("clean recall is zero; ratio undefined")]
    UndefinedRatio,

    #[error("no checkpoint within tolerance of MUI {0}")]
    MissingCheckpoint(f64),

    #[error("external detector failed: {0}")]
    External(String),

    #[error("malformed data in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
