//! Declarative network description, the two architecture presets, and the
//! canonical text form embedded in checkpoints.

mod checkpoint;
mod network;

use std::fmt;

pub use checkpoint::{Checkpoint, TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{init_params, ForwardTrace, Network, Params};

use crate::augment::CROP_SIZE;
use crate::error::{Error, Result};

pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const DEFAULT_VGG_HIDDEN: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// 3×3 (or k×k) convolution, stride 1, zero padding `pad`.
    Conv {
        out_channels: usize,
        kernel: usize,
        pad: usize,
    },
    Relu,
    MaxPool2,
    Dropout {
        rate: f64,
    },
    Flatten,
    Linear {
        out: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Linear { .. })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                pad,
            } => write!(f, "conv {out_channels} {kernel} {pad}"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::MaxPool2 => write!(f, "maxpool2"),
            LayerSpec::Dropout { rate } => write!(f, "dropout {rate}"),
            LayerSpec::Flatten => write!(f, "flatten"),
            LayerSpec::Linear { out } => write!(f, "linear {out}"),
            LayerSpec::Softmax => write!(f, "softmax"),
        }
    }
}

/// Ordered layer stack plus input shape `[C, H, W]` and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

const TEXT_HEADER: &str = "salex-net v1";

impl NetworkSpec {
    /// Shape after each layer. Fails with the index of the first layer that
    /// cannot accept its input.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let fail = |layer: usize, message: String| Error::Spec { layer, message };
        if self.input.contains(&0) {
            return Err(fail(0, format!("input shape {:?} has a zero extent", self.input)));
        }
        if self.layers.is_empty() {
            return Err(fail(0, "no layers".into()));
        }
        let mut shape = self.input.to_vec();
        let mut shapes = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    pad,
                } => {
                    let [_, h, w] = spatial(&shape).ok_or_else(|| fail(i, format!("conv needs a C×H×W input, got {shape:?}")))?;
                    if out_channels == 0 || kernel == 0 {
                        return Err(fail(i, "conv channels and kernel must be positive".into()));
                    }
                    if kernel > h + 2 * pad || kernel > w + 2 * pad {
                        return Err(fail(i, format!("kernel {kernel} exceeds padded input {h}x{w}")));
                    }
                    vec![out_channels, h + 2 * pad - kernel + 1, w + 2 * pad - kernel + 1]
                }
                LayerSpec::MaxPool2 => {
                    let [c, h, w] = spatial(&shape).ok_or_else(|| fail(i, format!("maxpool2 needs a C×H×W input, got {shape:?}")))?;
                    if h < 2 || w < 2 {
                        return Err(fail(i, format!("maxpool2 input {h}x{w} is smaller than 2x2")));
                    }
                    vec![c, h / 2, w / 2]
                }
                LayerSpec::Relu => shape,
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(fail(i, format!("dropout rate {rate} outside [0, 1)")));
                    }
                    shape
                }
                LayerSpec::Flatten => {
                    if shape.len() != 3 {
                        return Err(fail(i, format!("flatten needs a C×H×W input, got {shape:?}")));
                    }
                    vec![shape.iter().product()]
                }
                LayerSpec::Linear { out } => {
                    if shape.len() != 1 {
                        return Err(fail(i, format!("linear needs a flat input, got {shape:?}")));
                    }
                    if out == 0 {
                        return Err(fail(i, "linear width must be positive".into()));
                    }
                    vec![out]
                }
                LayerSpec::Softmax => {
                    if i != last {
                        return Err(fail(i, "softmax must be the last layer".into()));
                    }
                    if shape.len() != 1 {
                        return Err(fail(i, format!("softmax needs a flat input, got {shape:?}")));
                    }
                    shape
                }
            };
            shapes.push(shape.clone());
        }
        if self.layers[last] != LayerSpec::Softmax {
            return Err(fail(last, "the last layer must be softmax".into()));
        }
        if shape != [self.num_classes] {
            return Err(fail(
                last,
                format!("network outputs {shape:?} but num_classes is {}", self.num_classes),
            ));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    /// Shapes of the learned tensors in declaration order: weight then bias
    /// for every conv and linear layer.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let outputs = self.output_shapes()?;
        let mut shapes = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { self.input.to_vec() } else { outputs[i - 1].clone() };
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    ..
                } => {
                    shapes.push(vec![out_channels, input[0], kernel, kernel]);
                    shapes.push(vec![out_channels]);
                }
                LayerSpec::Linear { out } => {
                    shapes.push(vec![out, input[0]]);
                    shapes.push(vec![out]);
                }
                _ => {}
            }
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }

    /// Canonical text form, one layer per line.
    pub fn to_text(&self) -> String {
        let [c, h, w] = self.input;
        let mut s = format!("{TEXT_HEADER}\ninput {c} {h} {w}\nclasses {}\n", self.num_classes);
        for layer in &self.layers {
            s.push_str(&layer.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, message: String| Error::Parse {
            line: line as u64 + 1,
            message,
        };
        match lines.next() {
            Some((_, l)) if l.trim() == TEXT_HEADER => {}
            _ => return Err(bad(0, format!("missing {TEXT_HEADER:?} header"))),
        }
        let mut input = None;
        let mut classes = None;
        let mut layers = Vec::new();
        for (n, line) in lines {
            let mut words = line.split_whitespace();
            let keyword = words.next().unwrap_or_default();
            let args: Vec<&str> = words.collect();
            let nums = |count: usize| -> Result<Vec<usize>> {
                if args.len() != count {
                    return Err(bad(n, format!("{keyword} takes {count} arguments")));
                }
                args.iter()
                    .map(|a| a.parse().map_err(|_| bad(n, format!("bad number {a:?}"))))
                    .collect()
            };
            match keyword {
                "input" => {
                    let v = nums(3)?;
                    input = Some([v[0], v[1], v[2]]);
                }
                "classes" => classes = Some(nums(1)?[0]),
                "conv" => {
                    let v = nums(3)?;
                    layers.push(LayerSpec::Conv {
                        out_channels: v[0],
                        kernel: v[1],
                        pad: v[2],
                    });
                }
                "relu" => {
                    nums(0)?;
                    layers.push(LayerSpec::Relu)
                }
                "maxpool2" => {
                    nums(0)?;
                    layers.push(LayerSpec::MaxPool2)
                }
                "flatten" => {
                    nums(0)?;
                    layers.push(LayerSpec::Flatten)
                }
                "softmax" => {
                    nums(0)?;
                    layers.push(LayerSpec::Softmax)
                }
                "linear" => layers.push(LayerSpec::Linear { out: nums(1)?[0] }),
                "dropout" => {
                    let [rate] = args[..] else {
                        return Err(bad(n, "dropout takes 1 argument".into()));
                    };
                    let rate = rate
                        .parse()
                        .map_err(|_| bad(n, format!("bad dropout rate {rate:?}")))?;
                    layers.push(LayerSpec::Dropout { rate });
                }
                other => return Err(bad(n, format!("unknown layer {other:?}"))),
            }
        }
        let spec = Self {
            input: input.ok_or_else(|| bad(0, "missing input line".into()))?,
            num_classes: classes.ok_or_else(|| bad(0, "missing classes line".into()))?,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect()
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match *shape {
        [c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

/// VGG-19 convolution plan; `0` marks a 2×2 max pool.
const VGG19_PLAN: [usize; 21] = [
    64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0,
];

/// Customised VGG-19 on 1×44×44 crops with default hidden width and dropout.
pub fn build_vgg19_custom(num_classes: usize) -> NetworkSpec {
    vgg19_custom(num_classes, DEFAULT_VGG_HIDDEN, DEFAULT_DROPOUT)
}

/// The sixteen 3×3 convolutions of VGG-19 (five pooling stages), then
/// dropout, a single hidden fully connected layer, and the classifier
/// layer with softmax. On 44×44 input the spatial size runs
/// 44 → 22 → 11 → 5 → 2 → 1.
pub fn vgg19_custom(num_classes: usize, hidden: usize, dropout: f64) -> NetworkSpec {
    let mut layers = Vec::new();
    for &ch in &VGG19_PLAN {
        if ch == 0 {
            layers.push(LayerSpec::MaxPool2);
        } else {
            layers.push(LayerSpec::Conv {
                out_channels: ch,
                kernel: 3,
                pad: 1,
            });
            layers.push(LayerSpec::Relu);
        }
    }
    push_head(&mut layers, hidden, num_classes, dropout);
    NetworkSpec {
        input: [1, CROP_SIZE, CROP_SIZE],
        num_classes,
        layers,
    }
}

pub fn build_tiny(num_classes: usize) -> NetworkSpec {
    tiny(num_classes, DEFAULT_DROPOUT)
}

/// Desk-scale network with the same head as the VGG preset: three conv
/// blocks (8, 16, 32 channels), dropout, one hidden layer of 128, then the
/// classifier. About 110k parameters for seven classes.
pub fn tiny(num_classes: usize, dropout: f64) -> NetworkSpec {
    let mut layers = Vec::new();
    for ch in [8, 16, 32] {
        layers.push(LayerSpec::Conv {
            out_channels: ch,
            kernel: 3,
            pad: 1,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::MaxPool2);
    }
    push_head(&mut layers, 128, num_classes, dropout);
    NetworkSpec {
        input: [1, CROP_SIZE, CROP_SIZE],
        num_classes,
        layers,
    }
}

fn push_head(layers: &mut Vec<LayerSpec>, hidden: usize, num_classes: usize, dropout: f64) {
    layers.extend([
        LayerSpec::Dropout { rate: dropout },
        LayerSpec::Flatten,
        LayerSpec::Linear { out: hidden },
        LayerSpec::Relu,
        LayerSpec::Linear { out: num_classes },
        LayerSpec::Softmax,
    ]);
}
