use choicescore_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    InvalidState(String),
    #[error("{0}")]
    Capacity(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Sequence(String),
    #[error("{0}")]
    InvalidResponse(String),
    #[error("{0}")]
    NotReady(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("persistence failure: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::InvalidState(_) => "invalid_state",
            ServiceError::Capacity(_) => "capacity",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Sequence(_) => "sequence",
            ServiceError::InvalidResponse(_) => "invalid_response",
            ServiceError::NotReady(_) => "not_ready",
            ServiceError::Unauthorized(_) => "unauthorized",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Core(CoreError::InvalidResponse(_)) => "invalid_response",
            ServiceError::Core(CoreError::Input(_) | CoreError::Schema(_)) => "bad_request",
            ServiceError::Core(e) => e.code(),
            ServiceError::Io(_) => "persistence",
        }
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
