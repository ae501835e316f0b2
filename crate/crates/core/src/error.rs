use thiserror::Error;

use crate::map::C2Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("modulus exceeded the overflow ceiling {ceiling:e} after {steps} factor steps")]
    Overflow {
        steps: usize,
        ceiling: f64,
        last: C2Point,
    },

    #[error("point is outside the escape region V+ (branch of the Bottcher coordinate not certified)")]
    OutsideEscapeRegion,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("orbit is not a saddle: {0}")]
    NotSaddle(String),

    #[error("near-resonance at order {order}: |lambda^k - lambda_other| = {gap:e}")]
    Resonance { order: usize, gap: f64 },

    #[error("no dyadic radius passed the semiconjugacy defect test (best defect {best_defect:e})")]
    NoValidRadius { best_defect: f64 },

    #[error("pseudo-orbit parameter N = {requested} is below the admissible minimum {minimum}")]
    PseudoOrbitTooShort { requested: usize, minimum: usize },

    #[error("closing failed for period {period}: {reason} (residual {residual:e})")]
    ClosingFailure {
        period: usize,
        residual: f64,
        reason: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("escape after {completed} of {requested} steps")]
    Escaped { completed: usize, requested: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
