use thiserror::Error;

/// Errors raised by the numerical models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("wavefunction contains a non-finite amplitude at node {0}")]
    NonFinite(usize),

    #[error("initial state is not normalized: squared norm {0}")]
    NotNormalized(f64),

    #[error("tridiagonal solve hit a vanishing pivot at row {row}; the dt/dx combination is unstable")]
    SingularSolve { row: usize },

    #[error("probability bookkeeping drifted: detected + remaining = 1 + {defect:e}")]
    ClosureViolation { defect: f64 },

    #[error("no detection mass to average over")]
    NoDetectionMass,

    #[error("total collapse rate vanishes; no collapse center can be drawn")]
    ZeroRate,

    #[error("collapse annihilated the state (post-jump norm is zero)")]
    ZeroNorm,

    #[error("layer of thickness {thickness} spans {cells} cells; at least 3 are required")]
    UnresolvedLayer { thickness: f64, cells: usize },

    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
