use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step limit of {max_steps} exceeded at t = {t}")]
    StepLimitExceeded { max_steps: usize, t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("no section crossing found in [{t0}, {t1}]")]
    NoCrossing { t0: f64, t1: f64 },

    #[error("transient did not settle after {returns} section returns (last defect {defect:e})")]
    NoConvergence { returns: usize, defect: f64 },

    #[error("periodicity constraint is singular (det {det:e}, scale {scale:e})")]
    SingularConstraint { det: f64, scale: f64 },

    #[error("symmetric eigensolver failed to converge")]
    ConvergenceFailure,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
