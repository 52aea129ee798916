//! Binary grid files and JSON sidecars.
//!
//! A grid file is a 16-byte header — magic `OPC1`, little-endian `u32` rows,
//! `u32` cols, four reserved zero bytes — followed by the row-major values as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use opcorr_core::operators::PatConfig;
use opcorr_core::Grid;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{io_err, json_err, Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"OPC1";
pub const HEADER_LEN: usize = 16;

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(grid.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.cols() as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<Grid> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != GRID_MAGIC {
        return Err(bad("not an OPC1 grid file".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * rows * cols {
        return Err(bad(format!(
            "header says {rows}×{cols} but payload holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Grid::from_vec(rows, cols, data)?)
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    write_bytes(path, &encode_grid(grid))
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_grid(&bytes, path)
}

/// Writes `grid` and a `<path>.json` sidecar describing the operator setup.
pub fn write_grid_with_sidecar(path: &Path, grid: &Grid, cfg: &PatConfig) -> Result<()> {
    write_grid(path, grid)?;
    write_json(&sidecar_path(path), cfg)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}
