use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("zero vector")]
    ZeroVector,
    #[error("acceptance starvation: no accepted sample in {0} draws")]
    Starvation(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
