use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("projection undefined: ray angle {angle} rad reaches the image-plane horizon")]
    Domain { angle: f64 },
    #[error("depth must be positive, got {z}")]
    DegenerateDepth { z: f64 },
    #[error("displacement {dp} px (baseline {d} m) is too small to invert for depth")]
    DegenerateMotion { d: f64, dp: f64 },
    #[error("displacement {dp} px disagrees in sign with baseline {d} m")]
    SignMismatch { d: f64, dp: f64 },
    #[error("invalid camera intrinsics: focal length {0} px")]
    InvalidIntrinsics(f64),

    #[error("sensor trace does not cover [{t0}, {t1}] s")]
    InsufficientSamples { t0: f64, t1: f64 },
    #[error("sensor timestamps must be strictly increasing (sample {index})")]
    UnorderedSamples { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid search parameter p={0}: p must be >= 1 and p+1 a power of two")]
    InvalidSearchParam(u32),
    #[error("invalid dimensions {width}x{height}: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("the complexity accountant counts multiplications and requires the MSE criterion")]
    UnsupportedCriterion,

    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("depth-map grid {got} does not match frame grid {expected}")]
    GridMismatch { expected: String, got: String },
    #[error("camera displacement would shift pixels by {shift} px (limit {limit} px)")]
    ExcessiveDisplacement { shift: i64, limit: i64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
