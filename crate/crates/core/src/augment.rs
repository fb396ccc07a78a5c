//! Crop augmentation: random 44×44 crops of 48×48 faces for training, and
//! the deterministic ten-crop set (four corners, centre, and the mirror of
//! each) whose averaged prediction is used at test time.

use crate::dataset::SAMPLE_SIZE;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::RngState;

pub const CROP_SIZE: usize = 44;
/// Largest valid crop offset, `48 − 44`.
pub const MAX_OFFSET: usize = SAMPLE_SIZE - CROP_SIZE;

/// A 44×44 window of a 48×48 source, top-left corner at (`row`, `col`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropSpec {
    pub row: usize,
    pub col: usize,
}

impl CropSpec {
    pub fn new(row: usize, col: usize) -> Result<Self> {
        if row > MAX_OFFSET || col > MAX_OFFSET {
            return Err(Error::invalid(format!(
                "crop offset ({row}, {col}) outside [0, {MAX_OFFSET}]"
            )));
        }
        Ok(Self { row, col })
    }

    pub const fn center() -> Self {
        Self {
            row: MAX_OFFSET / 2,
            col: MAX_OFFSET / 2,
        }
    }

    /// Offsets drawn uniformly from {0..4}².
    pub fn random(rng: &mut RngState) -> Self {
        let row = rng.below(MAX_OFFSET + 1);
        let col = rng.below(MAX_OFFSET + 1);
        Self { row, col }
    }

    pub fn apply(&self, image: &GrayImage) -> Result<GrayImage> {
        check_source(image)?;
        image.crop(self.row, self.col, CROP_SIZE, CROP_SIZE)
    }
}

/// Upper-left, lower-left, upper-right, lower-right, centre.
pub const TEN_CROP_OFFSETS: [CropSpec; 5] = [
    CropSpec { row: 0, col: 0 },
    CropSpec { row: MAX_OFFSET, col: 0 },
    CropSpec { row: 0, col: MAX_OFFSET },
    CropSpec { row: MAX_OFFSET, col: MAX_OFFSET },
    CropSpec::center(),
];

fn check_source(image: &GrayImage) -> Result<()> {
    if image.dims() != (SAMPLE_SIZE, SAMPLE_SIZE) {
        return Err(Error::shape(format!(
            "crops need a {SAMPLE_SIZE}x{SAMPLE_SIZE} source, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

pub fn random_crops(image: &GrayImage, count: usize, rng: &mut RngState) -> Result<Vec<GrayImage>> {
    check_source(image)?;
    (0..count).map(|_| CropSpec::random(rng).apply(image)).collect()
}

/// The five [`TEN_CROP_OFFSETS`] crops followed by their horizontal
/// reflections, in that order.
pub fn ten_crop(image: &GrayImage) -> Result<Vec<GrayImage>> {
    check_source(image)?;
    let mut crops = TEN_CROP_OFFSETS
        .iter()
        .map(|c| c.apply(image))
        .collect::<Result<Vec<_>>>()?;
    let mirrored: Vec<GrayImage> = crops.iter().map(hflip).collect();
    crops.extend(mirrored);
    Ok(crops)
}

/// Mirror image: columns reversed.
pub fn hflip(image: &GrayImage) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        image.get(image.width() - 1 - x, y)
    })
}

/// Element-wise arithmetic mean, summed in list order.
pub fn average_predictions(predictions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty list of predictions"))?;
    let k = first.len();
    if let Some(p) = predictions.iter().find(|p| p.len() != k) {
        return Err(Error::shape(format!(
            "prediction lengths differ: {k} vs {}",
            p.len()
        )));
    }
    let mut mean = vec![0.0; k];
    for p in predictions {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    let n = predictions.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}
