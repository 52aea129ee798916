//! 8-bit grayscale PNG rendering. Each image is normalised by its own min/max,
//! which are recorded in the file name; quantitative work reads the float files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use opcorr_core::Grid;

use crate::error::{io_err, Error, Result};

/// `<stem>_min<lo>_max<hi>.png`.
pub fn png_name(stem: &str, lo: f64, hi: f64) -> String {
    format!("{stem}_min{lo:.3e}_max{hi:.3e}.png")
}

/// Maps `grid` linearly from `[min, max]` to `0..=255` (constant images map to 0).
pub fn to_gray(grid: &Grid) -> (Vec<u8>, f64, f64) {
    let (lo, hi) = (grid.min(), grid.max());
    let span = hi - lo;
    let pixels = grid
        .as_slice()
        .iter()
        .map(|v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    (pixels, lo, hi)
}

/// Writes `grid` into `dir` and returns the path used.
pub fn write_png(dir: &Path, stem: &str, grid: &Grid) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (pixels, lo, hi) = to_gray(grid);
    let path = dir.join(png_name(stem, lo, hi));
    let file = File::create(&path).map_err(io_err(&path))?;
    let png_err = |e: png::EncodingError| Error::Format {
        path: path.clone(),
        msg: e.to_string(),
    };
    let mut enc = png::Encoder::new(BufWriter::new(file), grid.cols() as u32, grid.rows() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(path)
}
