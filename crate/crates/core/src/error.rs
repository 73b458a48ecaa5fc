use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite state produced by the integrator at t = {time}")]
    BlowUp { time: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid observation operator: {0}")]
    InvalidObservation(String),

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("particle weights degenerate at step {step}")]
    WeightCollapse { step: usize },

    #[error("eigenvalue iteration did not converge")]
    EigenSolver,

    #[error("spectral radius {0} is not below one")]
    NotContractive(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::SingularInnovation
                | Error::WeightCollapse { .. }
                | Error::NotContractive(_)
                | Error::EigenSolver
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
