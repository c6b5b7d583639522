//! Binary field files and report output.
//!
//! Scalar fields: magic `TWK1`, then `n` and `N` as little-endian `u32`,
//! then `N^{2n}` little-endian `f64` values in row-major axis order.
//! Hermitian fields use magic `TWH1` with the same header, followed for each
//! node by the `n×n` entries as interleaved `(re, im)` pairs in row-major
//! order.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::hermitian::{HermitianField, Mat};

pub const FIELD_MAGIC: &[u8; 4] = b"TWK1";
pub const HERMITIAN_MAGIC: &[u8; 4] = b"TWH1";

fn header(magic: &[u8; 4], grid: &Grid) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&(grid.n_complex() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points() as u32).to_le_bytes());
    out
}

fn read_header<'a>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<(Grid, &'a [u8])> {
    if bytes.len() < 12 {
        return Err(Error::Format("file shorter than header".into()));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let grid = Grid::new(word(4), word(8)).map_err(|e| Error::Format(e.to_string()))?;
    Ok((grid, &bytes[12..]))
}

fn floats(body: &[u8], expected: usize) -> Result<Vec<f64>> {
    if body.len() != 8 * expected {
        return Err(Error::Format(format!(
            "expected {expected} values, found {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_field(f: &ScalarField) -> Vec<u8> {
    let mut out = header(FIELD_MAGIC, f.grid());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField> {
    let (grid, body) = read_header(FIELD_MAGIC, bytes)?;
    let values = floats(body, grid.len())?;
    ScalarField::from_values(&grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    Ok(fs::write(path, encode_field(f))?)
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    decode_field(&fs::read(path)?)
}

pub fn encode_hermitian(h: &HermitianField) -> Vec<u8> {
    let n = h.n();
    let mut out = header(HERMITIAN_MAGIC, h.grid());
    for m in h.entries() {
        for row in &m.0[..n] {
            for z in &row[..n] {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_hermitian(bytes: &[u8]) -> Result<HermitianField> {
    let (grid, body) = read_header(HERMITIAN_MAGIC, bytes)?;
    let n = grid.n_complex();
    let values = floats(body, grid.len() * 2 * n * n)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite entry".into()));
    }
    let entries = values
        .chunks_exact(2 * n * n)
        .map(|c| {
            let mut m = Mat::zero();
            for j in 0..n {
                for k in 0..n {
                    let at = 2 * (j * n + k);
                    m.0[j][k] = Complex64::new(c[at], c[at + 1]);
                }
            }
            m
        })
        .collect();
    let h = HermitianField::from_entries(&grid, entries);
    if h.hermiticity_defect() > 1e-14 * (1.0 + h.sup_norm()) {
        return Err(Error::Format("matrix field is not Hermitian".into()));
    }
    Ok(h)
}

pub fn write_hermitian(path: &Path, h: &HermitianField) -> Result<()> {
    Ok(fs::write(path, encode_hermitian(h))?)
}

pub fn read_hermitian(path: &Path) -> Result<HermitianField> {
    decode_hermitian(&fs::read(path)?)
}

/// Pretty-printed JSON document.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot serialise report: {e}")))?;
    Ok(fs::write(path, text + "\n")?)
}
