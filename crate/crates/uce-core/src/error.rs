//! Crate-wide error type.
//!
//! Convention used throughout: operations return [`Error::Validation`] for
//! bad data (shape mismatches between plan items and matrices, out-of-range
//! parameters, non-finite input), while the low-level arithmetic helpers on
//! [`crate::tensor`] treat shape mismatches as programmer errors and panic,
//! as dense linear-algebra crates usually do.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input failed a contract check; the message names the offending field
    /// or item index.
    Validation(String),
    /// A symmetric positive-definite factorization failed even after the
    /// jitter retry. Carries the smallest diagonal pivot encountered.
    Singular { smallest_pivot: f64 },
    /// The gradient-descent reference saw its objective rise for ten
    /// consecutive steps; the learning rate is too large for this system.
    Divergence { step: usize },
}

/// Shorthand for building a validation error from any message type.
pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation: {msg}"),
            Error::Singular { smallest_pivot } => write!(
                f,
                "matrix is numerically singular (smallest pivot {smallest_pivot:e})"
            ),
            Error::Divergence { step } => write!(
                f,
                "gradient descent diverged at step {step} (objective rose 10 consecutive steps); try a smaller learning rate"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
