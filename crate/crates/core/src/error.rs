use thiserror::Error;

/// Errors raised by filter design, stream processing and experiment plumbing.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A configuration cannot be realized (e.g. insufficient sample rate).
    #[error("configuration error: {0}")]
    Config(String),
    /// A measurement is undefined for the given data.
    #[error("measurement error: {0}")]
    Measurement(String),
    /// The delta-sigma loop left its stable region.
    #[error("modulator instability: {0}")]
    Instability(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
