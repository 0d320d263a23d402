use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no oscillation: sigma = {sigma} is below the effective threshold {threshold}")]
    NoOscillation { sigma: f64, threshold: f64 },

    #[error("steady-state solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear response is singular at omega = {omega}")]
    SingularResponse { omega: f64 },

    #[error("trajectory diverged at T = {time}")]
    Diverged { time: f64 },

    #[error("trajectory became non-finite at T = {time}")]
    NonFinite { time: f64 },

    #[error("{diverged} of {total} trajectories failed, above the 1% tolerance")]
    DivergenceRate { diverged: usize, total: usize },

    #[error("series too short for a periodogram: {len} samples")]
    TooShort { len: usize },

    #[error("inconsistent series lengths: expected {expected}, found {found}")]
    InconsistentLengths { expected: usize, found: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
