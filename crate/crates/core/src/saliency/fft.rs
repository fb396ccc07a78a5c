//! Iterative radix-2 Cooley-Tukey FFT in one and two dimensions.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place unnormalised 1-D transform; `data.len()` must be a power of two.
fn fft_in_place(data: &mut [Complex64], direction: Direction) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        // twiddles computed directly per index to avoid drift from repeated products
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for chunk in data.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

/// 2-D DFT of a row-major `height × width` grid.
///
/// The forward transform is unnormalised; the inverse divides by
/// `width · height`, so `inverse(forward(x)) = x`.
pub fn fft2d(
    data: &[Complex64],
    width: usize,
    height: usize,
    direction: Direction,
) -> Result<Vec<Complex64>> {
    if !width.is_power_of_two() || !height.is_power_of_two() {
        return Err(Error::invalid(format!(
            "fft2d needs power-of-two dimensions, got {width}x{height}"
        )));
    }
    if data.len() != width * height {
        return Err(Error::shape(format!(
            "fft2d grid {width}x{height} needs {} values, got {}",
            width * height,
            data.len()
        )));
    }
    let mut out = data.to_vec();
    for row in out.chunks_exact_mut(width) {
        fft_in_place(row, direction);
    }
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = out[y * width + x];
        }
        fft_in_place(&mut column, direction);
        for (y, c) in column.iter().enumerate() {
            out[y * width + x] = *c;
        }
    }
    if direction == Direction::Inverse {
        let scale = 1.0 / (width * height) as f64;
        for v in &mut out {
            *v *= scale;
        }
    }
    Ok(out)
}
