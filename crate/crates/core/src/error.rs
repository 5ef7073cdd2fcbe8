use thiserror::Error;

/// Every failure mode the toolkit reports. Variants map onto the CLI exit classes
/// via [`Error::class`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // input validation
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("imaginary part is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid characteristic entry (must be 0 or 1/2)")]
    BadCharacteristic,
    #[error("at most 4 derivative directions are supported, got {0}")]
    TooManyDerivatives(usize),
    #[error("genus {0} out of range 1..=6")]
    GenusOutOfRange(usize),
    #[error("{0} must be nonzero")]
    ZeroVector(&'static str),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("empty sample list")]
    EmptySamples,
    #[error("unknown point label {0:?}")]
    UnknownPoint(String),
    #[error("input is not periodic in x (defect {0:e})")]
    NotPeriodic(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // numerical limits
    #[error("target error too small: radius {radius} exceeds cap (lattice cap {cap})")]
    TargetTooSmall { radius: f64, cap: usize },
    #[error("exponential compensation factor overflows (log-magnitude {0})")]
    Overflow(f64),
    #[error("coefficient matrix is degenerate")]
    DegenerateSystem,
    #[error("point lies on the theta divisor")]
    OnDivisor,
    #[error("divisor sampling failed after exhausting the retry budget")]
    SamplingFailed,
    #[error("all four products of condition (C) are below the floor")]
    AllTermsTiny,
    #[error("root lost during continuation at t = {0}")]
    RootLost(f64),
    #[error("root is not simple (|d_U theta| = {0:e})")]
    NotSimple(f64),
    #[error("degenerate root (eta_dot = 0)")]
    DegenerateRoot,
    #[error("no convergence: best residual {best:e} after {restarts} restarts")]
    NoConvergence { best: f64, restarts: usize },
    #[error("leading jet coefficient is zero")]
    ZeroLeadingTerm,
    #[error("jet bases differ")]
    IncompatibleBase,
    #[error("order {0} lies outside the operator window")]
    WindowMiss(i32),
    #[error("truncation exhausted: {0}")]
    TruncationExhausted(String),
    #[error("insufficient samples: {samples} for {candidates} candidates")]
    InsufficientSamples { samples: usize, candidates: usize },
    #[error("all Kummer coordinates vanish")]
    AllZero,
    #[error("particles collided (separation {0:e})")]
    Collision(f64),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("no zeros of tau inside the window")]
    NoZeros,
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    InvalidInput,
    Limit,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            NotSymmetric(_) | NotPositiveDefinite | DimensionMismatch { .. } | NonFinite(_)
            | BadCharacteristic | TooManyDerivatives(_) | GenusOutOfRange(_) | ZeroVector(_)
            | Parse(_) | Schema(_) | Validation(_) | EmptySamples | UnknownPoint(_)
            | NotPeriodic(_) | InvalidArgument(_) | IncompatibleBase | WindowMiss(_) => {
                ErrorClass::InvalidInput
            }
            TargetTooSmall { .. } | Overflow(_) | TruncationExhausted(_) | StepUnderflow(_) => {
                ErrorClass::Limit
            }
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
