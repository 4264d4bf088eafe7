use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside domain [{lower}, {upper}]")]
    Domain { value: f64, lower: f64, upper: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("zero density at {location}")]
    ZeroDensity { location: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("invalid state: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
