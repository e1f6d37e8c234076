use crate::error::{Error, Result};
use crate::grid::Grid;

/// Source coordinate for output index `i` under corner-aligned sampling:
/// the first and last output samples land exactly on the first and last input
/// samples. A length-1 output samples the input's center.
#[inline]
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

#[inline]
fn split(pos: f64, n_in: usize) -> (usize, usize, f64) {
    let i0 = (pos.floor() as usize).min(n_in - 1);
    let i1 = (i0 + 1).min(n_in - 1);
    (i0, i1, pos - i0 as f64)
}

/// Bilinear resize with corner-aligned sampling.
pub fn resize_bilinear(values: &Grid, out_h: usize, out_w: usize) -> Result<Grid> {
    let (in_h, in_w) = values.dims();
    if in_h == 0 || in_w == 0 {
        return Err(Error::invalid("cannot resize an empty array"));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "target size {out_h}x{out_w} must be at least 1x1"
        )));
    }
    let cols: Vec<_> = (0..out_w)
        .map(|j| split(source_coord(j, in_w, out_w), in_w))
        .collect();
    let mut out = Grid::zeros(out_h, out_w);
    for i in 0..out_h {
        let (r0, r1, fy) = split(source_coord(i, in_h, out_h), in_h);
        for (j, &(c0, c1, fx)) in cols.iter().enumerate() {
            let top = values.get(r0, c0) * (1.0 - fx) + values.get(r0, c1) * fx;
            let bottom = values.get(r1, c0) * (1.0 - fx) + values.get(r1, c1) * fx;
            out.set(i, j, top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}
