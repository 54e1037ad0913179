//! 16-bit PGM export.

use crate::error::{CliError, Result};
use pat_core::ScalarField;
use std::path::Path;

/// Binary PGM with maxval 65535, rows along the first axis, intensities
/// mapped linearly from `[min, max]`.
pub fn pgm_bytes(rows: usize, cols: usize, data: &[f64]) -> Vec<u8> {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for v in data {
        let q = ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm(img: &ScalarField, path: &Path) -> Result<()> {
    if img.ndim() != 2 {
        return Err(CliError::Validation("PGM export needs a 2D image".into()));
    }
    std::fs::write(path, pgm_bytes(img.dims[0], img.dims[1], &img.data))
        .map_err(CliError::io(format!("writing {}", path.display())))
}
