//! Binary graymap (P5) export.
//!
//! Each raster is scaled on its own: the minimum maps to 0 and the maximum to
//! 255, linearly. The sidecar `<name>.scale.txt` records both ends so pixel
//! values can be mapped back. The top image row is the northernmost grid row.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use txplace::propagation::read_raster_text;

pub fn to_gray(values: &[f64]) -> (Vec<u8>, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let pixels = values
        .iter()
        .map(|v| {
            if span > 0.0 {
                (255.0 * (v - min) / span).round() as u8
            } else {
                0
            }
        })
        .collect();
    (pixels, min, max)
}

pub fn export(raster: &Path, out: &Path) -> anyhow::Result<(PathBuf, PathBuf)> {
    let (grid, values) = read_raster_text(raster)?;
    let (pixels, min, max) = to_gray(&values);
    let stem = raster
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("raster");

    let mut img = format!(
        "P5\n# {}\n{} {}\n255\n",
        txplace::VERSION,
        grid.cols,
        grid.rows
    )
    .into_bytes();
    for row in pixels.chunks(grid.cols).rev() {
        img.extend_from_slice(row);
    }
    let pgm_path = out.join(format!("{stem}.pgm"));
    fs::write(&pgm_path, img).with_context(|| format!("writing {}", pgm_path.display()))?;

    let scale = format!(
        "# {}\n# pixel = round(255 * (value - min) / (max - min)), 0 when max == min\nmin {min}\nmax {max}\n",
        txplace::VERSION
    );
    let scale_path = out.join(format!("{stem}.scale.txt"));
    fs::write(&scale_path, scale).with_context(|| format!("writing {}", scale_path.display()))?;
    Ok((pgm_path, scale_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_hits_both_ends() {
        let (px, min, max) = to_gray(&[2.0, 4.0, 6.0]);
        assert_eq!(px, vec![0, 128, 255]);
        assert_eq!((min, max), (2.0, 6.0));
    }

    #[test]
    fn flat_raster_is_black() {
        let (px, _, _) = to_gray(&[3.0; 4]);
        assert_eq!(px, vec![0; 4]);
    }
}
