use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, PatError>;
