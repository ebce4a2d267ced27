//! Subcommand implementations. Each command computes everything first and
//! only then writes its outputs, each via an atomic rename, so a failing
//! run never leaves a partial output directory behind.

mod debias;
mod edit;
mod inspect;
mod verify;

pub use debias::cmd_debias;
pub use edit::cmd_edit;
pub use inspect::cmd_inspect;
pub use verify::cmd_verify;

use std::fs;
use std::path::Path;

use serde::Serialize;
use uce_core::catalog::EmbeddingCatalog;
use uce_core::Matrix;

use crate::error::CliError;
use crate::format;
use crate::specfile::EditSpecFile;

pub(crate) struct RunInputs {
    pub spec: EditSpecFile,
    pub catalog: EmbeddingCatalog,
    pub wv: Matrix,
    pub wk: Option<Matrix>,
}

/// Loads and cross-validates the spec, catalog, and matrices. Any problem
/// here is an input error (exit 2), reported with the offending path or
/// field.
pub(crate) fn load_inputs(spec_path: &Path, catalog_path: &Path) -> Result<RunInputs, CliError> {
    let spec = EditSpecFile::load(spec_path)?;
    let catalog = format::load_catalog_path(catalog_path)?;
    spec.check_names(&catalog)?;
    let wv = format::load_matrix_path(&spec.wv)?;
    check_matrix_dim("wv", &wv, catalog.dim())?;
    let wk = match &spec.wk {
        Some(path) => {
            let m = format::load_matrix_path(path)?;
            check_matrix_dim("wk", &m, catalog.dim())?;
            Some(m)
        }
        None => {
            log::warn!("no key matrix in spec; editing the value matrix only");
            None
        }
    };
    Ok(RunInputs {
        spec,
        catalog,
        wv,
        wk,
    })
}

fn check_matrix_dim(label: &str, m: &Matrix, dim: usize) -> Result<(), CliError> {
    if m.cols() != dim {
        return Err(CliError::Validation(format!(
            "{label} has {} columns but the catalog dim is {dim}",
            m.cols()
        )));
    }
    Ok(())
}

pub(crate) fn prepare_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::OutputIo {
        path: out.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::OutputIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    format::atomic_write(path, &bytes)
}

pub(crate) fn write_text_file(path: &Path, text: &str) -> Result<(), CliError> {
    format::atomic_write(path, text.as_bytes())
}
