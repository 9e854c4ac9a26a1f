use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("rejected: {0}")]
    Validation(String),
    #[error("not ready: {0}")]
    Precondition(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("extractor transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Core(#[from] interest_core::Error),
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Core(e.into())
    }
}
