use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid or inconsistent model/config parameters.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The numerical flow produced non-finite values.
    #[error("integration fault at t = {t}: {message}")]
    Integration { t: f64, message: String },

    /// The request is outside the supported budget (e.g. the 2^N sign sweep).
    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
