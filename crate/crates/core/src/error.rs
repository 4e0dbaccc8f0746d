use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point is at or behind the camera plane (camera-space z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("pixel ray is parallel to the ground plane")]
    ParallelRay,
    #[error("ray intersects the ground behind the camera")]
    IntersectionBehindCamera,
    #[error("unprojection produced a degenerate homogeneous coordinate (w = {w})")]
    DegenerateUnprojection { w: f64 },
    #[error("camera matrix is singular")]
    SingularCamera,
    #[error("invalid frustum: {0}")]
    InvalidFrustum(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("edge set is empty")]
    EmptyEdges,
    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondences(String),
    #[error("only {visible} template points are visible, {required} required")]
    InsufficientVisibility { visible: usize, required: usize },
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed detection in frame {frame}: {reason}")]
    MalformedDetection { frame: usize, reason: String },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("pixel ({x}, {y}) lies in a region with no anchors")]
    UnanchoredRegion { x: usize, y: usize },
    #[error("iterative solve did not converge (residual {residual:e} after {sweeps} sweeps)")]
    Convergence { residual: f64, sweeps: usize },
    #[error("player has no valid pixels")]
    EmptyPlayer,
    #[error("trajectory problem has no observations")]
    Unconstrained,
    #[error("evaluation mask is empty")]
    EmptyEvaluation,
    #[error("synthetic render is empty: {0}")]
    EmptyRender(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
