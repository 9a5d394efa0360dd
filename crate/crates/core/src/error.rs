use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the localization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The mobile sits (numerically) on top of an anchor, so the range
    /// Jacobian is undefined.
    #[error("degenerate geometry: predicted range {range:.3e} m is below {epsilon:.0e} m")]
    DegenerateGeometry { range: f64, epsilon: f64 },

    #[error("non-finite value in filter state after {stage}")]
    NonFiniteState { stage: &'static str },

    #[error("timestamps went backwards: {next} s after {previous} s")]
    NonMonotonicTime { previous: f64, next: f64 },

    #[error("trajectory exceeds the flight envelope: {0}")]
    EnvelopeViolation(String),

    #[error("anchor {0} is not present in the anchor map")]
    UnknownAnchor(u8),

    #[error("invalid anchor map: {0}")]
    InvalidAnchors(String),

    #[error("{path}: line {line}: {message}")]
    AnchorParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("log line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    #[error("insufficient excitation: truth variance {variance:.3e} m^2 on axis {axis} is below 1e-4 m^2")]
    InsufficientExcitation { axis: usize, variance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
