use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tracker, its solver and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dense circulant oracle limited to {max} cells, grid has {cells}")]
    OracleTooLarge { cells: usize, max: usize },

    #[error("singular denominator at bin ({row}, {col}): |d| = {magnitude:e}")]
    SingularDenominator {
        row: usize,
        col: usize,
        magnitude: f64,
    },

    #[error("empty part list")]
    NoParts,

    #[error("region {width}x{height} is smaller than one {cell}x{cell} cell")]
    RegionTooSmall {
        width: usize,
        height: usize,
        cell: usize,
    },

    #[error("empty pixel region")]
    EmptyRegion,

    #[error("pixel buffer: {0}")]
    InvalidBuffer(String),

    #[error("box {0:?} lies outside the {1}x{2} frame")]
    BoxOutsideFrame([f64; 4], usize, usize),

    #[error("box too small: each part needs at least one feature cell ({0})")]
    BoxTooSmall(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sequence has {frames} frames but {boxes} ground-truth boxes")]
    CountMismatch { frames: usize, boxes: usize },

    #[error("no records to evaluate")]
    EmptyRecords,

    #[error("synthetic trajectory leaves the frame at frame {0}")]
    TrajectoryOutOfFrame(usize),

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
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
