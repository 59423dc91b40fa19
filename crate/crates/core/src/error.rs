use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),

    #[error("dataset root {0} contains no device directories with images")]
    NoClasses(PathBuf),

    #[error("device directory {0} contains no supported image files")]
    EmptyClass(PathBuf),

    #[error("{path}: HEIC/HEIF containers are not decoded, pre-convert required (e.g. to PNG)")]
    HeicUnsupported { path: PathBuf },

    #[error("{path}: decode failed: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image too small for block analysis: {height}x{width} (need at least 8x8)")]
    TooSmallForBlocks { height: usize, width: usize },

    #[error("insufficient blocks for variance: {0} (need at least 2)")]
    InsufficientBlocks(usize),

    #[error("image too small for PRNU analysis: {height}x{width} (crop is {crop})")]
    TooSmallForPrnu {
        height: usize,
        width: usize,
        crop: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training data contains a single class; both classes are required")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("class {name} has {count} samples; at least 2 are required for a split")]
    ClassTooSmall { name: String, count: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward pass requires a forward cache from the same batch")]
    StaleCache,

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
