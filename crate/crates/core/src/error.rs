use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A state or parameter outside the domain where the model is defined
    /// (for example a core group of size zero).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative discriminant D0 = {d0:e}")]
    Discriminant { d0: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("singular Jacobian (smallest/largest singular value = {ratio:e})")]
    SingularJacobian { ratio: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("iterate left the nonnegative octant and could not be damped back")]
    NegativeCoordinate,

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    MaxStepsExceeded(usize),

    #[error("no section crossing before t = {t_max}")]
    NoCrossing { t_max: f64 },

    #[error("maximum number of section returns ({0}) exceeded")]
    MaxReturnsExceeded(usize),

    #[error("continuation broken at parameter value {value}: {reason}")]
    ContinuationBroken { value: f64, reason: String },

    #[error("complex pair lost between {lo} and {hi}")]
    PairLost { lo: f64, hi: f64 },

    #[error("Jordan structure error: {0}")]
    Structure(String),

    #[error("ill-conditioned linear solve (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("ill-conditioned least-squares fit (condition number {cond:e})")]
    FitIllConditioned { cond: f64 },
}
