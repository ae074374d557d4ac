use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A step produced (or was handed) a NaN or infinite value.
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    /// A theorem was evaluated outside its hypothesis.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
