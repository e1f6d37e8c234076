//! Heatmap overlay of a CAM on its spectrogram.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::Spectrogram;

pub const DEFAULT_ALPHA: f64 = 0.45;

/// Colour ramp stops at 0, 0.25, 0.5, 0.75 and 1:
/// blue, cyan, green, yellow, red.
pub const RAMP_STOPS: [[u8; 3]; 5] = [
    [0, 0, 255],
    [0, 255, 255],
    [0, 255, 0],
    [255, 255, 0],
    [255, 0, 0],
];

/// Piecewise-linear ramp colour of `v` (clamped to [0, 1]) as reals in [0, 255].
pub fn ramp(v: f64) -> [f64; 3] {
    let x = v.clamp(0.0, 1.0) * 4.0;
    let i = (x.floor() as usize).min(3);
    let t = x - i as f64;
    let (a, b) = (RAMP_STOPS[i], RAMP_STOPS[i + 1]);
    std::array::from_fn(|k| a[k] as f64 + t * (b[k] as f64 - a[k] as f64))
}

/// 8-bit RGB image, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(
                BufWriter::new(&mut out),
                self.width as u32,
                self.height as u32,
            );
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::format(format!("png header: {e}")))?;
            w.write_image_data(&self.data)
                .map_err(|e| Error::format(format!("png data: {e}")))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Blends the grayscale spectrogram (dB min-max mapped) with the CAM ramp:
/// `out = (1 - alpha) * gray + alpha * ramp(cam)`. Low frequencies are at
/// the bottom of the image.
pub fn overlay(spec: &Spectrogram, cam_full: &Grid, alpha: f64) -> Result<RgbImage> {
    if cam_full.dims() != spec.values.dims() {
        return Err(Error::shape(format!(
            "CAM {:?} does not match spectrogram {:?}",
            cam_full.dims(),
            spec.values.dims()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let (rows, cols) = spec.values.dims();
    let (lo, hi) = spec.values.min_max();
    let gray = |v: f64| {
        if hi > lo {
            (v - lo) / (hi - lo) * 255.0
        } else {
            0.0
        }
    };
    let mut data = Vec::with_capacity(rows * cols * 3);
    for y in 0..rows {
        let bin = rows - 1 - y;
        for x in 0..cols {
            let g = gray(spec.values.get(bin, x));
            let c = ramp(cam_full.get(bin, x));
            for ck in c {
                let v = (1.0 - alpha) * g + alpha * ck;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(RgbImage {
        width: cols,
        height: rows,
        data,
    })
}
