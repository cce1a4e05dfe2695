use alloc::string::String;

/// Errors surfaced by the core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integration diverged at step {step}")]
    Diverged { step: usize },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("unknown region {0}")]
    UnknownRegion(usize),
    #[error("region {0} is held out and cannot supply demonstrations")]
    HeldOutRegion(usize),
    #[error("demonstration failed validation: {0}")]
    DemoValidation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid_input {
    ($($arg:tt)*) => { $crate::error::Error::InvalidInput(alloc::format!($($arg)*)) };
}

macro_rules! invalid_config {
    ($($arg:tt)*) => { $crate::error::Error::InvalidConfig(alloc::format!($($arg)*)) };
}

pub(crate) use invalid_config;
pub(crate) use invalid_input;
