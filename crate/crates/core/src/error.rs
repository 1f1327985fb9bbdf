use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integration diverged at t = {time}")]
    IntegrationDiverged { time: f64 },

    #[error("step size underflow at t = {time} (h = {step:e}); problem looks stiff")]
    Stiffness { time: f64, step: f64 },

    #[error("eigensolver failed to converge after {iterations} QR iterations")]
    EigensolverFailed { iterations: usize },

    #[error("particle ensemble diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("inadmissible state: {0}")]
    Inadmissible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("start time s = {start}: {source}")]
    AtStartTime {
        start: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("sample seed {seed}: {source}")]
    AtSeed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::IntegrationDiverged { .. }
            | Error::Stiffness { .. }
            | Error::EigensolverFailed { .. }
            | Error::SimulationDiverged { .. } => true,
            Error::AtStartTime { source, .. } | Error::AtSeed { source, .. } => {
                source.is_numerical()
            }
            Error::Inadmissible(_) | Error::InvalidInput(_) => false,
        }
    }
}
