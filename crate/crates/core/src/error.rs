use thiserror::Error;

/// Errors raised while validating parameters or driving a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("negative transmit power {0}")]
    NegativePower(f64),

    #[error("negative information amount {0} for a scheduled slot")]
    NegativeInformation(f64),

    #[error("admitted rate {rate} outside [0, {cap}]")]
    RateOutOfRange { rate: f64, cap: f64 },

    #[error("utility is not concave: {0}")]
    NonConcaveUtility(String),

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },

    #[error("I/O error on {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
