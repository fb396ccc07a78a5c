//! Layer primitives for single samples (no batch axis). Feature maps are
//! `[C, H, W]`, vectors are `[N]`.

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{Mode, RngState, Scalar, Tensor};
use crate::error::{Error, Result};

/// Gradients with respect to each differentiable input of an op, in the
/// op's argument order.
#[derive(Debug, Clone)]
pub struct OpGrad<T: Scalar> {
    pub input_grads: Vec<Tensor<T>>,
}

impl<T: Scalar> OpGrad<T> {
    pub fn input(&self) -> &Tensor<T> {
        &self.input_grads[0]
    }
    pub fn weight(&self) -> &Tensor<T> {
        &self.input_grads[1]
    }
    pub fn bias(&self) -> &Tensor<T> {
        &self.input_grads[2]
    }
}

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new<T: Scalar>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        input.expect_ndim(3, "conv2d input")?;
        weight.expect_ndim(4, "conv2d weight")?;
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let ws = weight.shape();
        if ws[1] != c {
            return Err(Error::shape(format!(
                "conv2d weight expects {} input channels, input has {c}",
                ws[1]
            )));
        }
        if ws[2] != ws[3] {
            return Err(Error::shape(format!(
                "conv2d kernel must be square, got {}x{}",
                ws[2], ws[3]
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        let k = ws[2];
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(Error::shape(format!(
                "conv2d kernel {k} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        Ok(Self {
            channels: c,
            height: h,
            width: w,
            out_channels: ws[0],
            kernel: k,
            stride,
            pad,
            out_h: (h + 2 * pad - k) / stride + 1,
            out_w: (w + 2 * pad - k) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Maps output position `o` and kernel tap `t` to an input coordinate,
    /// `None` when it falls into the zero padding.
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let s = (o * self.stride + t) as isize - self.pad as isize;
        (s >= 0 && (s as usize) < extent).then_some(s as usize)
    }

    /// `[C·k·k, H'·W']` patch matrix.
    fn im2col<T: Scalar>(&self, input: &[T]) -> Vec<T> {
        let (k, n) = (self.kernel, self.positions());
        let mut cols = vec![T::zero(); self.patch_len() * n];
        for c in 0..self.channels {
            let plane = &input[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * n;
                    for oy in 0..self.out_h {
                        let Some(y) = self.source(oy, ki, self.height) else {
                            continue;
                        };
                        for ox in 0..self.out_w {
                            if let Some(x) = self.source(ox, kj, self.width) {
                                cols[row + oy * self.out_w + ox] = plane[y * self.width + x];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T]) -> Vec<T> {
        let (k, n) = (self.kernel, self.positions());
        let mut out = vec![T::zero(); self.channels * self.height * self.width];
        for c in 0..self.channels {
            let base = c * self.height * self.width;
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * n;
                    for oy in 0..self.out_h {
                        let Some(y) = self.source(oy, ki, self.height) else {
                            continue;
                        };
                        for ox in 0..self.out_w {
                            if let Some(x) = self.source(ox, kj, self.width) {
                                out[base + y * self.width + x] += cols[row + oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Zero-padded 2-D cross-correlation.
///
/// `input` is `[C, H, W]`, `weight` is `[O, C, k, k]`, `bias` is `[O]`.
/// Output is `[O, H', W']` with `H' = (H + 2·pad − k) / stride + 1`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, weight, stride, pad)?;
    if bias.shape() != [g.out_channels] {
        return Err(Error::shape(format!(
            "conv2d bias must be [{}], got {:?}",
            g.out_channels,
            bias.shape()
        )));
    }
    let n = g.positions();
    let cols = g.im2col(input.data());
    let mut out = Vec::with_capacity(g.out_channels * n);
    for &b in bias.data() {
        out.extend(std::iter::repeat_n(b, n));
    }
    gemm_nn(g.out_channels, g.patch_len(), n, weight.data(), &cols, &mut out);
    Tensor::new(vec![g.out_channels, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d`] w.r.t. input, weight and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    grad_out: &Tensor<T>,
) -> Result<OpGrad<T>> {
    let g = ConvGeometry::new(input, weight, stride, pad)?;
    if grad_out.shape() != [g.out_channels, g.out_h, g.out_w] {
        return Err(Error::shape(format!(
            "conv2d grad_out must be [{}, {}, {}], got {:?}",
            g.out_channels,
            g.out_h,
            g.out_w,
            grad_out.shape()
        )));
    }
    let (o, q, n) = (g.out_channels, g.patch_len(), g.positions());
    let cols = g.im2col(input.data());
    let go = grad_out.data();

    let mut d_weight = vec![T::zero(); o * q];
    gemm_nt(o, n, q, go, &cols, &mut d_weight);

    let d_bias: Vec<T> = go.chunks_exact(n).map(|row| row.iter().copied().sum()).collect();

    let mut d_cols = vec![T::zero(); q * n];
    gemm_tn(q, o, n, weight.data(), go, &mut d_cols);
    let d_input = g.col2im(&d_cols);

    Ok(OpGrad {
        input_grads: vec![
            Tensor::new(input.shape().to_vec(), d_input)?,
            Tensor::new(weight.shape().to_vec(), d_weight)?,
            Tensor::new(vec![o], d_bias)?,
        ],
    })
}

/// Output of [`maxpool2`]: pooled map plus, per output cell, the flat input
/// index that won.
#[derive(Debug, Clone)]
pub struct PoolOutput<T: Scalar> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. An odd trailing row or column is dropped.
/// Ties go to the first cell in row-major window order.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<PoolOutput<T>> {
    input.expect_ndim(3, "maxpool2 input")?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "maxpool2 needs at least 2x2 input, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
    })
}

pub fn maxpool2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape(format!(
            "maxpool2 grad_out has {} values for {} pooled cells",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape.to_vec());
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(grad)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient where the forward input was strictly
/// positive; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "relu grad_out {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

#[derive(Debug, Clone)]
pub struct DropoutOutput<T: Scalar> {
    pub output: Tensor<T>,
    /// Per-element multiplier (0 or 1/(1−rate)); `None` when the op was the
    /// identity.
    pub mask: Option<Vec<T>>,
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`; eval mode and rate 0 are
/// the exact identity.
pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut RngState,
) -> Result<DropoutOutput<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(DropoutOutput {
            output: input.clone(),
            mask: None,
        });
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.uniform() < rate { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok(DropoutOutput {
        output: Tensor::new(input.shape().to_vec(), data)?,
        mask: Some(mask),
    })
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: Option<&[T]>) -> Tensor<T> {
    match mask {
        None => grad_out.clone(),
        Some(mask) => {
            let mut g = grad_out.clone();
            for (v, &m) in g.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
            g
        }
    }
}

/// `weight · input + bias` for `input: [N]`, `weight: [M, N]`, `bias: [M]`.
pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = linear_dims(input, weight)?;
    if bias.shape() != [m] {
        return Err(Error::shape(format!(
            "linear bias must be [{m}], got {:?}",
            bias.shape()
        )));
    }
    let mut out = bias.data().to_vec();
    gemm_nn(m, n, 1, weight.data(), input.data(), &mut out);
    Tensor::new(vec![m], out)
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<OpGrad<T>> {
    let (m, n) = linear_dims(input, weight)?;
    if grad_out.shape() != [m] {
        return Err(Error::shape(format!(
            "linear grad_out must be [{m}], got {:?}",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let mut d_input = vec![T::zero(); n];
    gemm_tn(n, m, 1, weight.data(), g, &mut d_input);
    let mut d_weight = vec![T::zero(); m * n];
    gemm_nn(m, 1, n, g, input.data(), &mut d_weight);
    Ok(OpGrad {
        input_grads: vec![
            Tensor::new(vec![n], d_input)?,
            Tensor::new(vec![m, n], d_weight)?,
            grad_out.clone(),
        ],
    })
}

fn linear_dims<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize)> {
    input.expect_ndim(1, "linear input")?;
    weight.expect_ndim(2, "linear weight")?;
    let (m, n) = (weight.shape()[0], weight.shape()[1]);
    if input.len() != n {
        return Err(Error::shape(format!(
            "linear weight expects {n} inputs, got {}",
            input.len()
        )));
    }
    Ok((m, n))
}

/// Numerically stable softmax (max-subtracted) over all elements.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::new(
        logits.shape().to_vec(),
        exps.into_iter().map(|e| e / total).collect(),
    )
    .expect("same shape")
}

/// `−ln probs[label]`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<T> {
    check_label(probs.len(), label)?;
    Ok(-probs.data()[label].ln())
}

/// Softmax followed by cross-entropy, with the loss computed from the
/// log-sum-exp so confident wrong predictions stay finite.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    check_label(logits.len(), label)?;
    let z = logits.data();
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let sum_exp: T = z.iter().map(|&v| (v - max).exp()).sum();
    let loss = max + sum_exp.ln() - z[label];
    Ok((loss, softmax(logits)))
}

/// Gradient of softmax+cross-entropy w.r.t. the logits: `probs − one_hot`.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    check_label(probs.len(), label)?;
    let mut g = probs.clone();
    g.data_mut()[label] -= T::one();
    Ok(g)
}

fn check_label(k: usize, label: usize) -> Result<()> {
    if label >= k {
        return Err(Error::invalid(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    Ok(())
}
