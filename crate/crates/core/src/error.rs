use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("invalid rotation: orthogonality residual {residual:e}, determinant {det}")]
    InvalidRotation { residual: f64, det: f64 },
    #[error("index {index} out of bounds for cloud of {len} points")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("duplicate correspondence ({0}, {1})")]
    DuplicatePair(usize, usize),
    #[error("weight {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pyramid level `{0}` is empty")]
    DegeneratePyramid(&'static str),
    #[error("attention context is empty")]
    EmptyAttentionContext,
    #[error("effective weight sum {sum:e} at or below threshold {threshold:e}")]
    DegenerateWeights { sum: f64, threshold: f64 },
    #[error("weighted points are collinear; rotation is ambiguous")]
    DegenerateGeometry,
    #[error("need at least 3 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
