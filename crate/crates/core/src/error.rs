use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("TIFF error: {0}")]
    Tiff(String),

    #[error("unsupported transform: {0}")]
    UnsupportedTransform(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("duplicate band name: {0}")]
    DuplicateBand(String),

    #[error("unknown band name: {0}")]
    UnknownBand(String),

    #[error("invalid date range: start {start} is after end {end}")]
    InvalidDateRange {
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
    },

    #[error("bounds do not intersect the raster extent")]
    NoIntersection,

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("empty image stack")]
    EmptyStack,

    #[error("segmentation failed: {0}")]
    Segmentation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown class name {name:?} at {location}")]
    UnknownClass { name: String, location: String },

    #[error("invalid class scheme: {0}")]
    InvalidScheme(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("point {index} at ({x}, {y}) lies outside the raster extent")]
    PointOutsideExtent { index: usize, x: f64, y: f64 },

    #[error("point {index} at ({x}, {y}) falls on a nodata pixel")]
    PointOnNodata { index: usize, x: f64, y: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("non-finite feature value at index {0}")]
    NonFiniteFeature(usize),

    #[error("feature count mismatch: expected {expected}, got {actual}")]
    FeatureCountMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the run configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

impl From<tiff::TiffError> for Error {
    fn from(e: tiff::TiffError) -> Self {
        Error::Tiff(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
