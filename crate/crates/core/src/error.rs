use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid coefficient evaluation ({what}) at input {input}")]
    InvalidCoefficient { what: String, input: String },

    #[error("modulus is not Dini: {0}")]
    NotDini(String),

    #[error("linear solve failed: achieved residual {achieved:.3e} > tolerance {tolerance:.3e}")]
    SolverFailure { achieved: f64, tolerance: f64 },

    #[error("no lambda in the sweep satisfies ||u|| + ||grad u|| <= 1/2 (best value {best:.4})")]
    LambdaExhausted { best: f64 },

    #[error("point {point:?} lies outside the grid box of half-width {half_width}")]
    OutOfDomain { point: Vec<f64>, half_width: f64 },

    #[error("numerical blow-up at step {step} (unit {unit})")]
    BlowUp { step: usize, unit: usize },

    #[error("diffusion matrix is singular at {point:?}")]
    SingularDiffusion { point: Vec<f64> },

    #[error("invalid particle cloud: {0}")]
    InvalidCloud(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
