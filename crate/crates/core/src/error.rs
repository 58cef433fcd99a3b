use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integration failed at t = {t}: step size underflow")]
    IntegrationFailure { t: f64 },

    #[error("singular matrix ({what}): condition estimate {condition:e}")]
    Singular { what: String, condition: f64 },

    #[error("Riccati solution does not exist: {0}")]
    RiccatiNonexistence(String),

    #[error("Newton solve did not converge after {iterations} iterations (best relative residual {best_residual:e})")]
    NoConvergence { iterations: usize, best_residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("noise channel does not match control channel: {0}")]
    ChannelMismatch(String),

    #[error("not controllable: {0}")]
    NotControllable(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("noise model inconsistent with system intensities: {0}")]
    NoiseInconsistency(String),

    #[error("step size {0} outside (0, 0.01]")]
    StepSize(f64),

    #[error("no moments recorded at checkpoint t = {0}")]
    MissingCheckpoint(f64),

    #[error("per-path costs were not retained")]
    PathsNotRetained,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
