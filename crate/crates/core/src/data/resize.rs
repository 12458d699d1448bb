use super::Grid;
use crate::{Error, Result};

/// Bilinear resampling with half-pixel centers (align-corners = false).
///
/// Output pixel `i` samples the source at `(i + 0.5) * in / out - 0.5`,
/// clamped to the valid range, so outputs never leave the input's min/max.
pub fn resize_bilinear(img: &Grid, out_h: usize, out_w: usize) -> Result<Grid> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    if img.height == out_h && img.width == out_w {
        return Ok(img.clone());
    }
    let rows = axis_taps(img.height, out_h);
    let cols = axis_taps(img.width, out_w);
    let mut values = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = img.get(r0, c0) * (1.0 - fc) + img.get(r0, c1) * fc;
            let bottom = img.get(r1, c0) * (1.0 - fc) + img.get(r1, c1) * fc;
            values.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Grid::new(out_h, out_w, values)
}

/// For each output index: the two neighbouring source indices and the weight
/// of the second one.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    let last = (input - 1) as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}
