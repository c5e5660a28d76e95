use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular matrix: |det| = {det:e}")]
    Singular { det: f64 },

    #[error("integrand returned non-finite value {value} at theta = {theta}")]
    Integrand { theta: f64, value: f64 },

    #[error("product left the representable range of f64")]
    Overflow,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource limit: {0}")]
    Resource(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
