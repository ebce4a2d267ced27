//! On-disk formats: the binary matrix container, the JSON embedding
//! catalog, and CSV export.
//!
//! Binary layout, fixed little-endian:
//!
//! ```text
//! magic "UCEMAT01" (8 bytes) | dtype (1 byte: 0=f32, 1=f64)
//! | rows (u32 LE) | cols (u32 LE) | payload (rows*cols values, row-major, LE)
//! ```
//!
//! Values are f64 in memory everywhere. [`save_matrix`] narrows the payload
//! to f32 only when every entry is exactly f32-representable, so
//! `load(save(m))` is bitwise-identical to `m` regardless of which width
//! ends up on disk; [`save_matrix_with_dtype`] pins the width explicitly
//! and refuses a lossy narrowing. CSV export prints 17 significant digits
//! and exists for debugging; the binary format is canonical.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uce_core::catalog::{Concept, EmbeddingCatalog};
use uce_core::{Matrix, Vector};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"UCEMAT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn byte(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    /// The bytes are not this format at all.
    #[error("not a matrix file: {0}")]
    Format(String),
    /// The header is ours but the body does not deliver what it promises.
    #[error("corrupt matrix file: {0}")]
    Corrupt(String),
    /// Structurally sound but carrying invalid values.
    #[error("{0}")]
    Validation(String),
    #[error("i/o failure at byte {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: io::Error,
    },
}

fn write_chunk<W: Write>(w: &mut W, offset: &mut u64, bytes: &[u8]) -> Result<(), FormatError> {
    w.write_all(bytes).map_err(|e| FormatError::Io {
        offset: *offset,
        source: e,
    })?;
    *offset += bytes.len() as u64;
    Ok(())
}

fn check_saveable(m: &Matrix) -> Result<(), FormatError> {
    for (i, &x) in m.data().iter().enumerate() {
        if !x.is_finite() {
            return Err(FormatError::Validation(format!(
                "entry {i} is not finite ({x})"
            )));
        }
    }
    if m.rows() > u32::MAX as usize || m.cols() > u32::MAX as usize {
        return Err(FormatError::Validation("dimensions exceed u32".into()));
    }
    Ok(())
}

fn exactly_f32(x: f64) -> bool {
    ((x as f32) as f64).to_bits() == x.to_bits()
}

/// Writes `m` with the narrowest lossless width: f32 when every entry
/// survives the round trip exactly, f64 otherwise.
pub fn save_matrix<W: Write>(m: &Matrix, w: &mut W) -> Result<(), FormatError> {
    let dtype = if m.data().iter().all(|&x| exactly_f32(x)) {
        Dtype::F32
    } else {
        Dtype::F64
    };
    save_matrix_with_dtype(m, w, dtype)
}

/// Writes `m` with an explicit payload width. Narrowing to f32 is refused
/// unless it is lossless for every entry.
pub fn save_matrix_with_dtype<W: Write>(
    m: &Matrix,
    w: &mut W,
    dtype: Dtype,
) -> Result<(), FormatError> {
    check_saveable(m)?;
    if dtype == Dtype::F32 {
        if let Some(i) = m.data().iter().position(|&x| !exactly_f32(x)) {
            return Err(FormatError::Validation(format!(
                "entry {i} is not exactly representable in f32; refusing lossy write"
            )));
        }
    }
    let mut offset = 0u64;
    write_chunk(w, &mut offset, MAGIC)?;
    write_chunk(w, &mut offset, &[dtype.byte()])?;
    write_chunk(w, &mut offset, &(m.rows() as u32).to_le_bytes())?;
    write_chunk(w, &mut offset, &(m.cols() as u32).to_le_bytes())?;
    match dtype {
        Dtype::F32 => {
            for &x in m.data() {
                write_chunk(w, &mut offset, &(x as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for &x in m.data() {
                write_chunk(w, &mut offset, &x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_exact_or(
    r: &mut impl Read,
    buf: &mut [u8],
    on_eof: impl Fn() -> FormatError,
) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            on_eof()
        } else {
            FormatError::Io {
                offset: 0,
                source: e,
            }
        }
    })
}

/// Reads a matrix and reports which width it was stored at.
pub fn load_matrix_meta(r: &mut impl Read) -> Result<(Matrix, Dtype), FormatError> {
    let mut magic = [0u8; 8];
    read_exact_or(r, &mut magic, || {
        FormatError::Corrupt("file ends inside the header".into())
    })?;
    if &magic != MAGIC {
        return Err(FormatError::Format("bad magic bytes".into()));
    }
    let mut byte = [0u8; 1];
    read_exact_or(r, &mut byte, || {
        FormatError::Corrupt("file ends inside the header".into())
    })?;
    let dtype = Dtype::from_byte(byte[0])
        .ok_or_else(|| FormatError::Format(format!("unknown dtype byte {}", byte[0])))?;
    let mut dim = [0u8; 4];
    read_exact_or(r, &mut dim, || {
        FormatError::Corrupt("file ends inside the header".into())
    })?;
    let rows = u32::from_le_bytes(dim);
    read_exact_or(r, &mut dim, || {
        FormatError::Corrupt("file ends inside the header".into())
    })?;
    let cols = u32::from_le_bytes(dim);
    if rows == 0 || cols == 0 {
        return Err(FormatError::Corrupt(format!(
            "zero dimension ({rows}x{cols})"
        )));
    }
    let count = rows as u64 * cols as u64;
    let elem = match dtype {
        Dtype::F32 => 4u64,
        Dtype::F64 => 8u64,
    };
    let payload_len = count
        .checked_mul(elem)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| FormatError::Corrupt(format!("dimension overflow ({rows}x{cols})")))?;

    let mut payload = vec![0u8; payload_len];
    read_exact_or(r, &mut payload, || {
        FormatError::Corrupt(format!(
            "truncated payload: expected {payload_len} bytes for {rows}x{cols} {}",
            dtype.name()
        ))
    })?;
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(FormatError::Corrupt("trailing data after payload".into())),
        Err(e) => {
            return Err(FormatError::Io {
                offset: 0,
                source: e,
            })
        }
    }

    let count = count as usize;
    let mut data = Vec::with_capacity(count);
    match dtype {
        Dtype::F32 => {
            for chunk in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            for chunk in payload.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::Validation(format!(
            "entry {i} is not finite ({})",
            data[i]
        )));
    }
    let m = Matrix::from_vec(rows as usize, cols as usize, data)
        .map_err(|e| FormatError::Validation(e.to_string()))?;
    Ok((m, dtype))
}

pub fn load_matrix(r: &mut impl Read) -> Result<Matrix, FormatError> {
    load_matrix_meta(r).map(|(m, _)| m)
}

/// Writes `bytes` to `path` through a temp file in the same directory plus
/// an atomic rename, so concurrent readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io_err = |e: io::Error| CliError::OutputIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn load_matrix_path(path: &Path) -> Result<Matrix, CliError> {
    load_matrix_meta_path(path).map(|(m, _)| m)
}

pub fn load_matrix_meta_path(path: &Path) -> Result<(Matrix, Dtype), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(path, e.to_string()))?;
    load_matrix_meta(&mut bytes.as_slice()).map_err(|e| CliError::input(path, e.to_string()))
}

pub fn save_matrix_path(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    save_matrix(m, &mut bytes).map_err(|e| CliError::Validation(e.to_string()))?;
    atomic_write(path, &bytes)
}

/// Renders one row per line, entries at 17 significant digits. Lossy by a
/// hair and for eyeballs only; the binary format is canonical.
pub fn write_csv<W: Write>(m: &Matrix, w: &mut W) -> io::Result<()> {
    for i in 0..m.rows() {
        let mut first = true;
        for &x in m.row(i) {
            if !first {
                write!(w, ",")?;
            }
            write!(w, "{x:.16e}")?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    dim: usize,
    concepts: Vec<RawConcept>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConcept {
    name: String,
    tokens: Vec<Vec<f64>>,
}

/// Parses the JSON catalog format:
/// `{ "dim": 4, "concepts": [ { "name": "...", "tokens": [[...], ...] } ] }`.
pub fn load_catalog<R: Read>(r: R) -> Result<EmbeddingCatalog, FormatError> {
    let raw: RawCatalog =
        serde_json::from_reader(r).map_err(|e| FormatError::Format(e.to_string()))?;
    let mut concepts = Vec::with_capacity(raw.concepts.len());
    for rc in raw.concepts {
        for (t, token) in rc.tokens.iter().enumerate() {
            if let Some(i) = token.iter().position(|x| !x.is_finite()) {
                return Err(FormatError::Validation(format!(
                    "concept '{}' token {t} entry {i} is not finite",
                    rc.name
                )));
            }
        }
        let tokens: Result<Vec<Vector>, _> = rc.tokens.into_iter().map(Vector::from_vec).collect();
        let tokens =
            tokens.map_err(|e| FormatError::Validation(format!("concept '{}': {e}", rc.name)))?;
        let concept =
            Concept::new(rc.name, tokens).map_err(|e| FormatError::Validation(e.to_string()))?;
        concepts.push(concept);
    }
    EmbeddingCatalog::from_parts(raw.dim, concepts)
        .map_err(|e| FormatError::Validation(e.to_string()))
}

pub fn load_catalog_path(path: &Path) -> Result<EmbeddingCatalog, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(path, e.to_string()))?;
    load_catalog(bytes.as_slice()).map_err(|e| CliError::input(path, e.to_string()))
}

/// Pretty-prints a catalog back to its JSON format.
pub fn catalog_to_json(cat: &EmbeddingCatalog) -> String {
    let raw = RawCatalog {
        dim: cat.dim(),
        concepts: cat
            .concepts()
            .iter()
            .map(|c| RawConcept {
                name: c.name.clone(),
                tokens: c.tokens.iter().map(|t| t.as_slice().to_vec()).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("catalog serializes");
    s.push('\n');
    s
}
