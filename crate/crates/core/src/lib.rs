//! Object-based wetland mapping from multi-temporal optical imagery.
//!
//! The pipeline runs median compositing, spectral indices, SNIC segmentation,
//! per-segment sampling, four classifiers and accuracy/separability metrics.

pub mod classifiers;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod rng;
pub mod sampling;
pub mod scenegen;
pub mod snic;

pub use error::{Error, Result};
