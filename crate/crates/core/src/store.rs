//! Binary matrix files.
//!
//! Layout: magic `EPDJ`, `u32` rows, `u32` cols, one flag byte (1 when the
//! matrix is PSV-normalized), then `rows * cols` row-major `f64` values.
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPDJ";
const HEADER: usize = 4 + 4 + 4 + 1;

pub fn encode(m: &DMatrix<f64>, normalized: bool) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER + 8 * m.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    buf.push(u8::from(normalized));
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    buf
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(DMatrix<f64>, bool)> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(bad("missing EPDJ header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let rows = word(4);
    let cols = word(8);
    let normalized = match bytes[12] {
        0 => false,
        1 => true,
        _ => return Err(bad("normalized flag must be 0 or 1")),
    };
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER))
        .ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes for {rows}x{cols}, found {}",
            bytes.len()
        )));
    }
    let data = &bytes[HEADER..];
    let m = DMatrix::from_fn(rows, cols, |r, c| {
        let at = 8 * (r * cols + c);
        f64::from_le_bytes(data[at..at + 8].try_into().expect("8 bytes"))
    });
    Ok((m, normalized))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, normalized: bool) -> Result<()> {
    fs::write(path, encode(m, normalized))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, bool)> {
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}
