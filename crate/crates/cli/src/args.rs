use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "salex", version, about = "Facial expression recognition from faces or their saliency maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one saliency map (PGM) per sample.
    Saliency(SaliencyArgs),
    /// Train a network on faces or saliency maps.
    Train(TrainArgs),
    /// Evaluate a checkpoint and export confusion matrices.
    Eval(EvalArgs),
    /// Pearson correlation of two reports' per-class recall diagonals.
    Correlate(CorrelateArgs),
    /// Blend a saliency map over a face image.
    Overlay(OverlayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Vgg19,
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Faces,
    Saliency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Dataset: `fer2013:<csv>` or `dir:<root>` (one sub-directory per class).
    #[arg(long)]
    pub dataset: String,

    /// Class list for `dir:` datasets: fer2013 or ckplus.
    #[arg(long, default_value = "fer2013")]
    pub taxonomy: String,

    /// Use only the first N samples of the selected partition.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Split a `dir:` dataset into this many folds.
    #[arg(long)]
    pub folds: Option<usize>,

    /// Seed of the fold split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    /// Dataset: `fer2013:<csv>` or `dir:<root>`.
    #[arg(long)]
    pub input: String,

    /// Class list for `dir:` datasets: fer2013 or ckplus.
    #[arg(long, default_value = "fer2013")]
    pub taxonomy: String,

    /// Map generator: `spectral` or `external:<dir>`.
    #[arg(long, default_value = "spectral")]
    pub backend: String,

    /// Only this partition (FER2013: Training, PublicTest or PrivateTest).
    #[arg(long)]
    pub partition: Option<String>,

    /// Use only the first N samples of each partition.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Output directory; maps go to `<out>/<partition>/<id>.pgm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Train on this fold's complement (needs --folds).
    #[arg(long)]
    pub fold: Option<usize>,

    /// Network input [config: input_mode; default: faces].
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Saliency source in saliency mode: `spectral` or `external:<dir>`
    /// [config: saliency_backend; default: spectral].
    #[arg(long)]
    pub saliency_backend: Option<String>,

    /// Architecture [config: arch; default: vgg19].
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,

    /// Learning rate [config: learning_rate; default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,

    /// Epochs [config: epochs; default: 250 for fer2013, 60 for ckplus].
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Random seed [config: seed; default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Mini-batch size [config: batch_size; default: 128].
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// SGD momentum [config: momentum; default: 0.9].
    #[arg(long)]
    pub momentum: Option<f64>,

    /// Dropout rate [config: dropout_rate; default: 0.5].
    #[arg(long)]
    pub dropout: Option<f64>,

    /// Random crops per image per epoch [config: crops_per_sample; default: 10].
    #[arg(long)]
    pub crops: Option<usize>,

    /// Draw the crops once instead of every epoch [config: crop_sampling = "fixed"].
    #[arg(long)]
    pub fixed_crops: bool,

    /// Multiply the learning rate by --lr-decay-factor every N epochs
    /// [config: lr_decay_every; default: off].
    #[arg(long)]
    pub lr_decay_every: Option<usize>,

    /// Step-decay factor [config: lr_decay_factor; default: 0.1].
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,

    /// TOML file of defaults; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Checkpoint path; the epoch log and manifest are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `salex train`.
    #[arg(long)]
    pub ckpt: PathBuf,

    #[command(flatten)]
    pub data: DatasetArgs,

    /// Training, PublicTest or PrivateTest for FER2013; `all` or `fold:<i>`
    /// for directories [default: PrivateTest / all].
    #[arg(long)]
    pub partition: Option<String>,

    /// Average predictions over ten crops, or use the centre crop only.
    #[arg(long, value_enum, default_value = "on")]
    pub tencrop: Switch,

    /// Network input; must match training.
    #[arg(long, value_enum, default_value = "faces")]
    pub mode: ModeArg,

    /// Saliency source in saliency mode: `spectral` or `external:<dir>`.
    #[arg(long, default_value = "spectral")]
    pub saliency_backend: String,

    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Report directory written by `salex eval`.
    #[arg(long)]
    pub report_a: PathBuf,

    /// Second report directory.
    #[arg(long)]
    pub report_b: PathBuf,

    /// Result file (CSV `report_a,report_b,r`).
    #[arg(long, default_value = "correlation.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Face image (PGM).
    #[arg(long)]
    pub face: PathBuf,

    /// Saliency map image; computed with the spectral backend when omitted.
    #[arg(long)]
    pub map: Option<PathBuf>,

    /// Map weight: 0 keeps the face, 1 shows only the map.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,

    /// Output PGM.
    #[arg(long)]
    pub out: PathBuf,
}
