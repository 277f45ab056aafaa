use thiserror::Error;

/// Errors raised by the numerical core and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("point {0} is not a domain endpoint")]
    NotAnEndpoint(f64),

    #[error("singular evaluation at x = {0}")]
    SingularEvaluation(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
