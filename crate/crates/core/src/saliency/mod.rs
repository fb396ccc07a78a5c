//! Saliency maps for face images.
//!
//! Two backends produce maps: the built-in spectral-residual predictor,
//! which is generic and never sees face-specific training data, and
//! ingestion of maps generated out-of-band by any external predictor.

pub mod fft;
mod spectral;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use fft::{fft2d, Direction};
pub use spectral::{spectral_residual, spectral_residual_working};

use crate::dataset::{DatasetPartition, Sample};
use crate::error::{Error, Result};
use crate::image::{normalize_min_max, read_image, resize_bilinear, GrayImage};

/// A [`GrayImage`] that has been min-max normalised: its minimum is 0 and
/// its maximum 1, unless the raw map was constant, in which case it is all
/// zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap(GrayImage);

impl SaliencyMap {
    pub fn from_raw(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height, "raw map size");
        Self(GrayImage::new(width, height, normalize_min_max(values)).expect("normalised"))
    }

    pub fn normalize(image: &GrayImage) -> Self {
        let raw: Vec<f64> = image.pixels().iter().map(|&v| v as f64).collect();
        Self::from_raw(image.width(), image.height(), &raw)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self(GrayImage::filled(width, height, 0.0))
    }

    pub fn image(&self) -> &GrayImage {
        &self.0
    }

    pub fn into_image(self) -> GrayImage {
        self.0
    }
}

/// Parameters of the spectral-residual backend.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    /// Side of the square grid the FFT runs on; a power of two ≥ 8.
    pub working_size: usize,
    /// Width of the box filter applied to the log amplitude spectrum (odd).
    pub smoothing_size: usize,
    /// Standard deviation of the output Gaussian blur, in working pixels.
    pub sigma: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self::with_working_size(64)
    }
}

impl SpectralParams {
    pub fn with_working_size(working_size: usize) -> Self {
        Self {
            working_size,
            smoothing_size: 3,
            sigma: working_size as f64 / 16.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.working_size.is_power_of_two() || self.working_size < 8 {
            return Err(Error::invalid(format!(
                "working_size must be a power of two >= 8, got {}",
                self.working_size
            )));
        }
        if self.smoothing_size == 0 || self.smoothing_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "smoothing_size must be odd, got {}",
                self.smoothing_size
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::invalid(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Loads an externally generated map, resamples it bilinearly to
/// `target` = (width, height) and min-max normalises it.
pub fn ingest_external_map(source: &Path, target: (usize, usize)) -> Result<SaliencyMap> {
    let raw = read_image(source)?;
    let resized = resize_bilinear(&raw, target.0, target.1)?;
    Ok(SaliencyMap::normalize(&resized))
}

/// Per-pixel `(1 − alpha)·face + alpha·map`, clamped to [0, 1].
pub fn overlay(face: &GrayImage, map: &SaliencyMap, alpha: f64) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if face.dims() != map.image().dims() {
        return Err(Error::shape(format!(
            "face is {}x{} but map is {}x{}",
            face.width(),
            face.height(),
            map.image().width(),
            map.image().height()
        )));
    }
    let pixels = face
        .pixels()
        .iter()
        .zip(map.image().pixels())
        .map(|(&f, &m)| (((1.0 - alpha) * f as f64 + alpha * m as f64) as f32).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(face.width(), face.height(), pixels)
}

/// Where a sample's saliency map comes from.
#[derive(Debug, Clone)]
pub enum SaliencyBackend {
    Spectral(SpectralParams),
    /// Maps stored as `<dir>/<origin source>/<origin id>.pgm`, the layout
    /// `salex saliency` writes.
    External(PathBuf),
}

impl SaliencyBackend {
    pub fn map_for(&self, sample: &Sample) -> Result<SaliencyMap> {
        let dims = sample.image.dims();
        match self {
            SaliencyBackend::Spectral(params) => spectral_residual(&sample.image, params),
            SaliencyBackend::External(dir) => {
                let path = dir.join(sample.origin.relative_path("pgm"));
                if !path.exists() {
                    return Err(Error::invalid(format!(
                        "no external saliency map for sample {} (expected {})",
                        sample.origin,
                        path.display()
                    )));
                }
                ingest_external_map(&path, dims)
            }
        }
    }

    /// Copy of `partition` with every image replaced by its saliency map.
    pub fn map_partition(&self, partition: &DatasetPartition) -> Result<DatasetPartition> {
        let samples = partition
            .samples
            .par_iter()
            .map(|s| {
                Ok(Sample {
                    image: self.map_for(s)?.into_image(),
                    label: s.label,
                    origin: s.origin.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetPartition {
            name: partition.name.clone(),
            samples,
        })
    }
}
