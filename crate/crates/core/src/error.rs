use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller-supplied argument is malformed (non-finite values, bad
    /// dimensions, empty data where points are required).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix factorization or solve broke down. Carries condition
    /// diagnostics where available.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A sampled or simulated trajectory left the admissible region.
    #[error("trajectory diverged at step {step} (|x| = {magnitude:.3e})")]
    Diverged { step: usize, magnitude: f64 },

    /// The sample-average objective could not be evaluated because the
    /// rollout for trajectory `trajectory` diverged at step `step`.
    #[error("rollout {trajectory} diverged at step {step}")]
    RolloutDiverged { trajectory: usize, step: usize },

    /// Every descent start failed; carries a per-start diagnostic.
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }
}
