use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),
    #[error("invalid lag {0}: lags start at 1")]
    InvalidLag(usize),
    #[error("invalid state index {index} (chain has {num_states} states)")]
    InvalidState { index: usize, num_states: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("point at distance {distance} from the center lies outside the ball of radius {radius}")]
    DomainViolation { distance: f64, radius: f64 },
    #[error("gradient norm {norm} exceeds the Lipschitz constant {bound}")]
    GradientTooLarge { norm: f64, bound: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("regularizer must be positive definite (epsilon = {0})")]
    NotPositiveDefinite(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("solver did not converge after {0} iterations")]
    NonConverged(usize),
    #[error("invalid tau {0}: tau must be at least 1")]
    InvalidTau(usize),
    #[error("delta {0} must be below 1/e for this bound")]
    DeltaTooLarge(f64),
    #[error("iterate trace was not stored for this run")]
    TraceMissing,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
