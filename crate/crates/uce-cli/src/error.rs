//! Process-level error type and the exit-code map.

use std::path::PathBuf;

use thiserror::Error;

/// Exit codes are part of the CLI contract so shell pipelines can branch:
/// 0 success, 2 validation (any bad input, including unreadable or
/// malformed files), 3 numerically singular system, 4 debias
/// non-convergence, 5 verification mismatch, 1 anything unexpected.
#[derive(Debug, Error)]
pub enum CliError {
    /// A problem with a named input file: missing, unreadable, malformed,
    /// or failing format validation.
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    /// Bad request independent of any one file (spec field combinations,
    /// unresolved concept names, dimension mismatches).
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Singular(String),

    #[error("debias did not converge within {max_iters} iterations; trace written")]
    NonConvergence { max_iters: usize },

    /// Recomputed report disagrees with the stored one; the message lists
    /// every mismatching field.
    #[error("verification failed:\n{0}")]
    VerifyMismatch(String),

    /// Output-side I/O failure. Unlike input problems this is not a
    /// validation issue, so it maps to the generic failure code.
    #[error("{path}: {message}")]
    OutputIo { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Validation(_) => 2,
            CliError::Singular(_) => 3,
            CliError::NonConvergence { .. } => 4,
            CliError::VerifyMismatch(_) => 5,
            CliError::OutputIo { .. } => 1,
        }
    }

    pub(crate) fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<uce_core::Error> for CliError {
    fn from(e: uce_core::Error) -> Self {
        match e {
            uce_core::Error::Validation(msg) => CliError::Validation(msg),
            uce_core::Error::Singular { .. } => CliError::Singular(e.to_string()),
            uce_core::Error::Divergence { .. } => CliError::Validation(e.to_string()),
        }
    }
}
