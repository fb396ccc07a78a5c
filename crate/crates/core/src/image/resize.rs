use super::GrayImage;
use crate::error::{Error, Result};

/// Bilinear resampling with half-pixel centres (align-corners = false).
///
/// Output pixel `(x, y)` samples the source at
/// `sx = (x + 0.5) · W / W' − 0.5`, `sy = (y + 0.5) · H / H' − 0.5`,
/// clamped into `[0, W − 1] × [0, H − 1]`, and blends the four neighbours.
pub fn resize_bilinear(image: &GrayImage, new_width: usize, new_height: usize) -> Result<GrayImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::invalid(format!(
            "resize target must be positive, got {new_width}x{new_height}"
        )));
    }
    let (w, h) = image.dims();
    if (w, h) == (new_width, new_height) {
        return Ok(image.clone());
    }
    let xs = taps(w, new_width);
    let ys = taps(h, new_height);
    let mut out = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (image.row(y0), image.row(y1));
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] as f64 * (1.0 - fx) + r0[x1] as f64 * fx;
            let bottom = r1[x0] as f64 * (1.0 - fx) + r1[x1] as f64 * fx;
            out.push(((top * (1.0 - fy) + bottom * fy) as f32).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(new_width, new_height, out)
}

/// Per output index: (lower source index, upper source index, weight of upper).
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}
