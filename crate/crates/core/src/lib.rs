//! Facial expression recognition from face images or from their visual
//! saliency maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors and the differentiable layer primitives with
//!   analytic backward passes, plus a finite-difference gradient checker.
//! * [`model`]: declarative layer stacks (customised VGG-19 and a small
//!   desk-scale preset), forward/backward passes and checkpoints.
//! * [`image`] and [`saliency`]: grayscale rasters, PGM I/O, bilinear
//!   resampling, a radix-2 FFT and the spectral-residual saliency backend.
//! * [`dataset`]: FER2013 CSV and labeled-directory loaders, k-fold splits.
//! * [`augment`]: random 44x44 training crops and the ten-crop test protocol.
//! * [`train`]: SGD with momentum, the training loop, evaluation with
//!   confusion matrices and the Pearson correlation of per-class recalls.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod image;
pub mod model;
pub mod saliency;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use model::{Checkpoint, LayerSpec, Network, NetworkSpec};
pub use saliency::{SaliencyMap, SpectralParams};
pub use tensor::{Mode, RngState, Scalar, Tensor};
