use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the set on which the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller-side precondition (normalization, probability mass) was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The game or solver was configured in a way the operation cannot use.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
macro_rules! contract {
    ($($arg:tt)*) => { $crate::error::Error::Contract(format!($($arg)*)) };
}
macro_rules! config {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use {config, contract, domain};
