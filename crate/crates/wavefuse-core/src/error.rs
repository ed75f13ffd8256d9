//! Shared error type for every fallible operation in the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants mirror the failure classes of the public
/// API: shape/dimension violations, on-disk format violations, bad argument
/// values, and corruption-kind misuse.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or map dimensions are inconsistent with the operation.
    #[error("shape error: {0}")]
    Shape(String),
    /// Byte- or text-level violation of an on-disk format.
    #[error("format error: {0}")]
    Format(String),
    /// An argument value is outside the operation's domain.
    #[error("input error: {0}")]
    Input(String),
    /// A corruption kind was routed to the wrong signal type.
    #[error("kind error: {0}")]
    Kind(String),
    /// A generator could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn kind(msg: impl Into<String>) -> Self {
        Error::Kind(msg.into())
    }
    pub fn generation(msg: impl Into<String>) -> Self {
        Error::Generation(msg.into())
    }
}
