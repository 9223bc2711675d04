//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Failure modes of the sequence-model core.
///
/// Every fallible operation in this crate reports one of these variants;
/// the CLI layer maps them onto process exit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A parameter or configuration value violates a documented precondition
    /// (odd state size, zero-length kernel, non-positive rescale factor, ...).
    InvalidArgument(String),
    /// Tensor dimensions do not line up with what the operation expects.
    ShapeMismatch(String),
    /// The requested execution mode is not available for this configuration,
    /// e.g. streaming a bidirectional model.
    InvalidMode(String),
    /// A numeric result left the finite range (overflow or NaN).
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::InvalidMode(msg) => write!(f, "invalid mode: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
