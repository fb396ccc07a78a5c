//! Mini-batch SGD training and evaluation.
//!
//! Each epoch draws `crops_per_sample` random 44×44 crops of every training
//! image, shuffles them, and runs momentum SGD on the mean cross-entropy of
//! each mini-batch. Every random draw (crop offsets, shuffle order, dropout
//! masks) comes from its own stream derived from the seed and the item's
//! position, so results do not depend on scheduling.
//!
//! Within a batch, per-item gradients are computed in parallel over fixed
//! chunks of [`GRAD_CHUNK`] items. Each chunk is summed in item order and the
//! chunk sums are then added in chunk order. The reduction tree depends only
//! on the batch size, which makes runs bit-identical for a given seed at any
//! thread count.

mod eval;
mod stats;

use std::ops::ControlFlow;
use std::path::Path;

use rayon::prelude::*;

pub use eval::{
    correlate_diagonals, evaluate, predict_sample, row_normalize, Classifier, ConfusionMatrix, EvalReport,
};
pub use stats::pearson;

use crate::augment::CropSpec;
use crate::dataset::{DatasetPartition, Sample};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, LayerSpec, Network, NetworkSpec, Params, TrainingMeta};
use crate::saliency::SaliencyBackend;
use crate::tensor::{argmax, Mode, RngState, Scalar, Tensor};

/// Items per parallel gradient chunk.
pub const GRAD_CHUNK: usize = 16;

const STREAM_CROP: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Faces,
    Saliency,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Faces => "faces",
            InputMode::Saliency => "saliency",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "faces" => Some(InputMode::Faces),
            "saliency" => Some(InputMode::Saliency),
            _ => None,
        }
    }
}

/// Whether training crops are redrawn every epoch or drawn once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropSampling {
    PerEpoch,
    Fixed,
}

/// Multiply the learning rate by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub dropout_rate: f64,
    pub seed: u64,
    pub input_mode: InputMode,
    pub crops_per_sample: usize,
    pub crop_sampling: CropSampling,
    pub lr_decay: Option<StepDecay>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 250,
            batch_size: 128,
            momentum: 0.9,
            dropout_rate: 0.5,
            seed: 0,
            input_mode: InputMode::Faces,
            crops_per_sample: 10,
            crop_sampling: CropSampling::PerEpoch,
            lr_decay: None,
        }
    }
}

impl TrainConfig {
    /// Full FER2013 protocol: 250 epochs at lr 0.01 with ten crops per image.
    pub fn fer2013_full() -> Self {
        Self::default()
    }

    /// Full CK+ protocol: as FER2013 but 60 epochs.
    pub fn ckplus_full() -> Self {
        Self {
            epochs: 60,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.crops_per_sample == 0 {
            return Err(Error::invalid("crops per sample must be at least 1"));
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || !(d.factor > 0.0 && d.factor <= 1.0) {
                return Err(Error::invalid("step decay needs every >= 1 and factor in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.factor.powi(((epoch - 1) / d.every) as i32),
            None => self.learning_rate,
        }
    }
}

/// `v ← momentum·v − lr·g; p ← p + v`, tensor by tensor.
pub fn sgd_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &Params<T>,
    velocity: &mut Params<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if !params.same_shapes(grads) || !params.same_shapes(velocity) {
        return Err(Error::shape("sgd_step: params, gradients and velocity differ in shape"));
    }
    let (lr, mu) = (T::from_f64(lr), T::from_f64(momentum));
    for ((p, g), v) in params.tensors.iter_mut().zip(&grads.tensors).zip(&mut velocity.tensors) {
        for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = mu * *v - lr * g;
            *p += *v;
        }
    }
    Ok(())
}

/// Copy of `spec` with every dropout layer set to `rate`.
pub fn with_dropout(spec: &NetworkSpec, rate: f64) -> NetworkSpec {
    let mut spec = spec.clone();
    for layer in &mut spec.layers {
        if let LayerSpec::Dropout { rate: r } = layer {
            *r = rate;
        }
    }
    spec
}

/// Replaces every image by its saliency map when `mode` is saliency.
pub fn prepare_inputs(
    partition: &DatasetPartition,
    mode: InputMode,
    backend: &SaliencyBackend,
) -> Result<DatasetPartition> {
    match mode {
        InputMode::Faces => Ok(partition.clone()),
        InputMode::Saliency => backend.map_partition(partition),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy on this epoch's training crops, with dropout active.
    pub train_acc: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<EpochStats>,
}

/// Trains a freshly initialised network; dropout layers take
/// `config.dropout_rate`.
pub fn train<T: Scalar>(spec: &NetworkSpec, training: &DatasetPartition, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    let network = Network::new(with_dropout(spec, config.dropout_rate), config.seed)?;
    train_with(network, training, config, |_, _| ControlFlow::Continue(()))
}

/// Trains `network` in place, calling `observer` after every epoch. Returning
/// `ControlFlow::Break` stops training after that epoch.
pub fn train_with<T: Scalar>(
    mut network: Network<T>,
    training: &DatasetPartition,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochStats, &Network<T>) -> ControlFlow<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if training.is_empty() {
        return Err(Error::invalid(format!("training partition {:?} is empty", training.name)));
    }
    let k = network.num_classes();
    if let Some(s) = training.samples.iter().find(|s| s.label >= k) {
        return Err(Error::invalid(format!("sample {} has label {} but the network has {k} classes", s.origin, s.label)));
    }
    let mut velocity = Params::zeros_like(network.params());
    let mut log = Vec::with_capacity(config.epochs);
    let items = training.len() * config.crops_per_sample;

    for epoch in 1..=config.epochs {
        let lr = config.learning_rate_at(epoch);
        let crop_epoch = match config.crop_sampling {
            CropSampling::PerEpoch => epoch as u64,
            CropSampling::Fixed => 0,
        };
        let mut order: Vec<usize> = (0..items).collect();
        RngState::derive(config.seed, &[STREAM_SHUFFLE, epoch as u64]).shuffle(&mut order);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let job = BatchJob {
                network: &network,
                samples: &training.samples,
                crops_per_sample: config.crops_per_sample,
                seed: config.seed,
                epoch: epoch as u64,
                crop_epoch,
                first_position: (b * config.batch_size) as u64,
            };
            let result = job.run(batch)?;
            if !result.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: result.loss,
                });
            }
            let mut grads = result.grads;
            grads.scale(T::from_f64(1.0 / batch.len() as f64));
            sgd_step(network.params_mut(), &grads, &mut velocity, lr, config.momentum)?;
            loss_sum += result.loss;
            correct += result.correct;
        }

        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / items as f64,
            train_acc: correct as f64 / items as f64,
            learning_rate: lr,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train_acc {:.4} lr {lr}",
            stats.mean_loss,
            stats.train_acc
        );
        log.push(stats);
        if observer(&stats, &network).is_break() {
            break;
        }
    }

    let last = log.last().expect("at least one epoch ran");
    let meta = TrainingMeta {
        epoch: last.epoch as u64,
        seed: config.seed,
        loss: last.mean_loss,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(network, meta),
        log,
    })
}

struct BatchJob<'a, T: Scalar> {
    network: &'a Network<T>,
    samples: &'a [Sample],
    crops_per_sample: usize,
    seed: u64,
    epoch: u64,
    crop_epoch: u64,
    first_position: u64,
}

struct BatchResult<T: Scalar> {
    loss: f64,
    correct: usize,
    grads: Params<T>,
}

impl<T: Scalar> BatchJob<'_, T> {
    fn run(&self, batch: &[usize]) -> Result<BatchResult<T>> {
        let partials = batch
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut acc = BatchResult {
                    loss: 0.0,
                    correct: 0,
                    grads: Params::zeros_like(self.network.params()),
                };
                for (i, &item) in chunk.iter().enumerate() {
                    let position = self.first_position + (c * GRAD_CHUNK + i) as u64;
                    let (loss, probs, grads) = self.item(item, position)?;
                    acc.loss += loss;
                    acc.correct += usize::from(argmax(&probs) == self.samples[item / self.crops_per_sample].label);
                    acc.grads.add_assign(&grads);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut it = partials.into_iter();
        let mut total = it.next().expect("batch is non-empty");
        for p in it {
            total.loss += p.loss;
            total.correct += p.correct;
            total.grads.add_assign(&p.grads);
        }
        Ok(total)
    }

    fn item(&self, item: usize, position: u64) -> Result<(f64, Vec<f64>, Params<T>)> {
        let (s, c) = (item / self.crops_per_sample, item % self.crops_per_sample);
        let sample = &self.samples[s];
        let mut crop_rng = RngState::derive(self.seed, &[STREAM_CROP, self.crop_epoch, s as u64, c as u64]);
        let crop = CropSpec::random(&mut crop_rng).apply(&sample.image)?;
        let input: Tensor<T> = self.network.image_tensor(&crop)?;
        let mut drop_rng = RngState::derive(self.seed, &[STREAM_DROPOUT, self.epoch, position]);
        let (loss, probs, grads) = self.network.loss_and_grads(&input, sample.label, Mode::Train, &mut drop_rng)?;
        let probs = probs.data().iter().map(|&v| v.to_f64()).collect();
        Ok((loss.to_f64(), probs, grads))
    }
}

/// Epoch log as CSV with header `epoch,mean_loss,train_acc`.
pub fn epoch_log_csv(log: &[EpochStats]) -> String {
    let mut s = String::from("epoch,mean_loss,train_acc\n");
    for e in log {
        s.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.mean_loss, e.train_acc));
    }
    s
}

pub fn write_epoch_log(path: &Path, log: &[EpochStats]) -> Result<()> {
    std::fs::write(path, epoch_log_csv(log)).map_err(|e| Error::io(path, e))
}
