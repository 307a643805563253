use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate equation: all coefficients are zero")]
    DegenerateEquation,

    #[error("requested accuracy not reached (best estimate {best}, error estimate {error_estimate})")]
    Accuracy { best: f64, error_estimate: f64 },

    #[error("pole of the medium response at omega = {omega}")]
    Pole { omega: f64 },

    #[error("marginal stability: {0}")]
    MarginalStability(String),

    #[error("singular parametrization: {0}")]
    SingularParametrization(String),

    #[error("zero signal response at omega = {omega} (readout orthogonal to signal)")]
    ZeroSignal { omega: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
