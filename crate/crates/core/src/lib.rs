//! Source camera identification from pixel evidence.
//!
//! Three pipelines share one evaluation harness:
//!
//! * [`jpeg`]: per-position statistics of 8×8 block DCT coefficients, classified
//!   with an RBF support vector machine.
//! * [`prnu`]: Wiener-shrunk high-frequency noise residuals (a sensor-fingerprint
//!   proxy), classified with a linear support vector machine.
//! * [`cnn`]: a small convolutional network trained end to end with Adam.
//!
//! [`synth`] generates synthetic devices with known ground truth so every
//! pipeline can be checked without an external dataset.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cnn;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod jpeg;
pub mod model;
pub mod pipeline;
pub mod prnu;
pub mod svm;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Dataset, DeviceLabel, FeatureMatrix, Grid, ImageRecord, PixelRange, RasterImage,
    SplitIndices,
};

/// Seed used whenever the caller does not pin one.
pub const DEFAULT_SEED: u64 = 42;
