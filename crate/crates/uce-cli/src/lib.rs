//! File formats and command implementations behind the `uce` binary.
//!
//! The numerical work lives in `uce-core`; this crate owns everything that
//! touches the filesystem: the binary matrix format, the JSON catalog and
//! edit-spec formats, report/trace serialization, and the four commands
//! (`edit`, `debias`, `verify`, `inspect`). Commands compute the complete
//! result first and only then write outputs, each through an atomic
//! temp-file rename, so a failing run never leaves partial files behind.

pub mod commands;
pub mod error;
pub mod format;
pub mod logging;
pub mod report;
pub mod specfile;

pub use error::CliError;
