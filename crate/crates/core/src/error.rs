use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The requested parameters do not describe a distribution in the open
    /// manifold (boundary Bernoulli probability, singular covariance).
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// An update produced parameters outside the valid domain.
    #[error("update leaves the parameter domain: {0}")]
    DomainExit(String),

    #[error("ill-conditioned Fisher information: condition number {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("enumeration capacity exceeded: dimension {dim} > {max}")]
    Capacity { dim: usize, max: usize },

    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Re-labels a degenerate-parameter error as a domain exit.
    pub(crate) fn into_domain_exit(self) -> Self {
        match self {
            Error::Degenerate(msg) => Error::DomainExit(msg),
            other => other,
        }
    }

    pub fn is_domain_exit(&self) -> bool {
        matches!(self, Error::DomainExit(_))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
