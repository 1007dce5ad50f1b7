use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    PixelBufferSize { expected: usize, actual: usize },

    #[error("image {width}x{height} is smaller than the {patch_size}px patch")]
    DimensionTooSmall {
        width: usize,
        height: usize,
        patch_size: usize,
    },

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("patch is not square ({width}x{height})")]
    NotSquare { width: usize, height: usize },

    #[error("unknown class label {label:?}{}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    UnknownLabel { label: String, line: Option<usize> },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate manifest record {0:?}")]
    DuplicateRecord(String),

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("class {0} has no images")]
    EmptyClass(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("records mix image ids {first:?} and {other:?}")]
    MixedImageIds { first: String, other: String },

    #[error("ROC input needs at least one positive and one negative sample")]
    SingleClass,

    #[error("class {0} is absent from the ground truth")]
    MissingClass(&'static str),

    #[error("image {0:?} has no ground-truth label")]
    UnknownImage(String),

    #[error("malformed parameter file: {0}")]
    ParamFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("missing input {0}")]
    MissingInput(PathBuf),

    /// Failure inside a pipeline stage; the message carries the inner error.
    #[error("{stage}: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
