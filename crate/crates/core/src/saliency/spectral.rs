//! Spectral-residual saliency: the non-smooth part of the log amplitude
//! spectrum, recombined with the original phase.

use num_complex::Complex64;

use super::fft::{fft2d, Direction};
use super::{SaliencyMap, SpectralParams};
use crate::error::Result;
use crate::image::{resize_bilinear, GrayImage};

const LOG_AMPLITUDE_FLOOR: f64 = 1e-12;

/// Saliency map at the source image's resolution.
pub fn spectral_residual(image: &GrayImage, params: &SpectralParams) -> Result<SaliencyMap> {
    let working = spectral_residual_working(image, params)?;
    let resized = resize_bilinear(working.image(), image.width(), image.height())?;
    Ok(SaliencyMap::normalize(&resized))
}

/// Saliency map at `working_size × working_size`.
pub fn spectral_residual_working(image: &GrayImage, params: &SpectralParams) -> Result<SaliencyMap> {
    params.validate()?;
    let n = params.working_size;
    let small = resize_bilinear(image, n, n)?;
    let (lo, hi) = small.range();
    if hi <= lo {
        return Ok(SaliencyMap::zeros(n, n));
    }

    let grid: Vec<Complex64> = small
        .pixels()
        .iter()
        .map(|&v| Complex64::new(v as f64, 0.0))
        .collect();
    let spectrum = fft2d(&grid, n, n, Direction::Forward)?;

    let log_amp: Vec<f64> = spectrum
        .iter()
        .map(|c| c.norm().max(LOG_AMPLITUDE_FLOOR).ln())
        .collect();
    let smoothed = box_filter(&log_amp, n, n, params.smoothing_size);
    let residual: Vec<Complex64> = spectrum
        .iter()
        .zip(log_amp.iter().zip(&smoothed))
        .map(|(c, (&l, &s))| Complex64::from_polar((l - s).exp(), c.arg()))
        .collect();

    let back = fft2d(&residual, n, n, Direction::Inverse)?;
    let energy: Vec<f64> = back.iter().map(|c| c.norm_sqr()).collect();
    let blurred = gaussian_blur(&energy, n, n, params.sigma);
    Ok(SaliencyMap::from_raw(n, n, &blurred))
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Mean over a `size × size` window, edges clamped.
fn box_filter(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    let r = (size / 2) as isize;
    let kernel = vec![1.0 / size as f64; size];
    separable(values, width, height, &kernel, r)
}

fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    separable(values, width, height, &kernel, r)
}

/// Horizontal then vertical pass with a centred kernel of radius `r`.
fn separable(values: &[f64], width: usize, height: usize, kernel: &[f64], r: isize) -> Vec<f64> {
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| w * row[clamp_index(x as isize + k as isize - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| w * tmp[clamp_index(y as isize + k as isize - r, height) * width + x])
                .sum();
        }
    }
    out
}
