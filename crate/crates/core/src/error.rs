use std::io;

use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer extents do not compose.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A network, learner or optimizer was configured inconsistently.
    #[error("config error: {0}")]
    Config(String),
    /// Non-finite values reached a place where they would corrupt state.
    #[error("numerics error: {0}")]
    Numerics(String),
    /// A file did not follow the expected binary layout.
    #[error("format error: {0}")]
    Format(String),
    /// An index or label fell outside its valid range.
    #[error("range error: {0}")]
    Range(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
macro_rules! format_err {
    ($($arg:tt)*) => { $crate::error::Error::Format(format!($($arg)*)) };
}

pub(crate) use {config_err, dim_err, format_err};
