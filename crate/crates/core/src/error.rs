use crate::model::ParamState;

/// Errors produced by the fGP library.
#[derive(Debug, thiserror::Error)]
pub enum FgpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A covariance matrix could not be factorized even after jitter escalation.
    #[error("numerical failure: {message}")]
    NumericalFailure {
        message: String,
        state: Option<Box<ParamState>>,
    },

    #[error("chain initialization failed: no finite log posterior after {attempts} attempts")]
    InitializationFailure { attempts: usize },
}

impl FgpError {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        FgpError::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_spec(msg: impl Into<String>) -> Self {
        FgpError::InvalidSpec(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        FgpError::NumericalFailure {
            message: msg.into(),
            state: None,
        }
    }

    pub(crate) fn with_state(self, state: &ParamState) -> Self {
        match self {
            FgpError::NumericalFailure { message, .. } => FgpError::NumericalFailure {
                message,
                state: Some(Box::new(state.clone())),
            },
            other => other,
        }
    }
}

pub type Result<T, E = FgpError> = std::result::Result<T, E>;
