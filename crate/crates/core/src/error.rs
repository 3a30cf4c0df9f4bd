use thiserror::Error;

/// Errors raised while building or validating a planning problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("unknown dynamics model `{0}` (expected double_integrator, unicycle or quad6d)")]
    UnknownModel(String),
    #[error("could not place {n_agents} agents in the workspace after {attempts} rejected samples")]
    InfeasibleWorkspace { n_agents: usize, attempts: usize },
}

impl ConfigError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn dimension(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        ConfigError::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}

/// Failures of the iterative LQR solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite value in {quantity} at stage {stage}")]
    NonFinite { quantity: &'static str, stage: usize },
    #[error("Q_uu not positive definite at stage {stage} (regularization {mu:e})")]
    NotPositiveDefinite { stage: usize, mu: f64 },
    #[error("regularization exceeded its maximum ({mu:e}); cost weights are likely ill-conditioned")]
    RegularizationExhausted { mu: f64 },
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;
