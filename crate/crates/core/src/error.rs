use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("particle {particle} at ({x:.3}, {y:.3}) is outside the padded grid")]
    OutOfDomain { particle: usize, x: f64, y: f64 },

    #[error("field of {nx}x{ny} nodes is too small; need at least {min}x{min}")]
    DimensionTooSmall { nx: usize, ny: usize, min: usize },

    #[error("non-finite force at node {node}")]
    NonFiniteForce { node: usize },

    #[error("non-finite value in {what}")]
    NonFiniteField { what: &'static str },

    #[error("time step {dt} exceeds the stability bound {bound:.6}")]
    StabilityViolation { dt: f64, bound: f64 },

    #[error("bad magic in {path:?}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("file {path:?} is truncated")]
    TruncatedFile { path: PathBuf },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("loss mask selects no frames")]
    EmptyMask,

    #[error("gradient has a non-finite component")]
    NonFiniteGradient,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("no frames found in {0:?}")]
    MissingFrames(PathBuf),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid scenario: {}", FieldError::join(.0))]
    InvalidScenario(Vec<FieldError>),

    #[error("cancelled")]
    Cancelled,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// A validation failure tied to a JSON path such as `spawns[0].count`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError { field: field.into(), message: message.into() }
    }

    fn join(errors: &[FieldError]) -> String {
        errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; ")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
