//! `uce inspect`: print a matrix file's header and entry statistics, with
//! an optional CSV export of the payload.

use std::path::Path;

use crate::error::CliError;
use crate::format::{atomic_write, load_matrix_meta_path, write_csv};

pub fn cmd_inspect(path: &Path, csv: Option<&Path>) -> Result<(), CliError> {
    let (m, dtype) = load_matrix_meta_path(path)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in m.data() {
        min = min.min(x);
        max = max.max(x);
    }
    println!(
        "{}×{} {}, fro={}, min={}, max={}",
        m.rows(),
        m.cols(),
        dtype.name(),
        m.frobenius_norm(),
        min,
        max
    );
    if let Some(csv_path) = csv {
        let mut buf = Vec::new();
        write_csv(&m, &mut buf).map_err(|e| CliError::OutputIo {
            path: csv_path.to_path_buf(),
            message: e.to_string(),
        })?;
        atomic_write(csv_path, &buf)?;
    }
    Ok(())
}
