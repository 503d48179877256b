use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solution exploded at particle {particle}, step {step}")]
    Explosion { particle: usize, step: usize },

    #[error("singular regression at step {step}: {reason}")]
    SingularRegression { step: usize, reason: String },

    #[error("missing derivative: {0}")]
    MissingDerivative(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
