use super::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::ops::{
    conv2d, conv2d_backward, dropout, dropout_backward, linear, linear_backward, maxpool2,
    maxpool2_backward, relu, relu_backward, softmax_cross_entropy, softmax_cross_entropy_backward,
};
use crate::tensor::{Mode, RngState, Scalar, Tensor};

/// Learned tensors in declaration order (weight, bias per conv/linear layer).
/// Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T: Scalar> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(other: &Params<T>) -> Self {
        Self {
            tensors: other.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }

    pub fn same_shapes(&self, other: &Params<T>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// All values concatenated.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// He initialisation: weights ~ N(0, 2 / fan_in), where fan_in is
/// `C·k·k` for convolutions and the input width for linear layers; biases
/// are zero. Values are drawn layer by layer in row-major order.
pub fn init_params<T: Scalar>(spec: &NetworkSpec, rng: &mut RngState) -> Result<Params<T>> {
    let shapes = spec.param_shapes()?;
    let mut tensors = Vec::with_capacity(shapes.len());
    for pair in shapes.chunks_exact(2) {
        let (w, b) = (&pair[0], &pair[1]);
        let fan_in: usize = w[1..].iter().product();
        let std = (2.0 / fan_in as f64).sqrt();
        tensors.push(Tensor::from_fn(w.clone(), |_| T::from_f64(rng.normal() * std)));
        tensors.push(Tensor::zeros(b.clone()));
    }
    Ok(Params { tensors })
}

enum LayerAux<T: Scalar> {
    None,
    Pool(Vec<usize>),
    Dropout(Option<Vec<T>>),
}

/// Everything a forward pass keeps for the backward pass.
pub struct ForwardTrace<T: Scalar> {
    /// `inputs[i]` is the input of layer `i`; the final entry is the output.
    inputs: Vec<Tensor<T>>,
    aux: Vec<LayerAux<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn probs(&self) -> &Tensor<T> {
        self.inputs.last().expect("nonempty trace")
    }

    /// Input of the final softmax.
    pub fn logits(&self) -> &Tensor<T> {
        &self.inputs[self.inputs.len() - 2]
    }

    /// Identifies the piecewise-linear region the pass went through: which
    /// ReLU inputs were positive and which cell won each pooling window.
    /// Two points with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self, spec: &NetworkSpec) -> Vec<usize> {
        let mut sig = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            match (layer, &self.aux[i]) {
                (LayerSpec::Relu, _) => {
                    sig.extend(
                        self.inputs[i]
                            .data()
                            .iter()
                            .enumerate()
                            .filter(|(_, &v)| v > T::zero())
                            .map(|(j, _)| j),
                    );
                    sig.push(usize::MAX);
                }
                (LayerSpec::MaxPool2, LayerAux::Pool(argmax)) => {
                    sig.extend_from_slice(argmax);
                    sig.push(usize::MAX);
                }
                _ => {}
            }
        }
        sig
    }
}

/// A network description together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar> {
    spec: NetworkSpec,
    params: Params<T>,
}

impl<T: Scalar> Network<T> {
    /// Validates `spec` and draws fresh parameters from `RngState::new(seed)`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let params = init_params(&spec, &mut RngState::new(seed))?;
        Ok(Self { spec, params })
    }

    pub fn with_params(spec: NetworkSpec, params: Params<T>) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        if shapes.len() != params.tensors.len()
            || shapes.iter().zip(&params.tensors).any(|(s, t)| s.as_slice() != t.shape())
        {
            return Err(Error::shape("parameters do not match the network spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn into_params(self) -> Params<T> {
        self.params
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: Params {
                tensors: self.params.tensors.iter().map(Tensor::cast).collect(),
            },
        }
    }

    pub fn image_tensor(&self, image: &GrayImage) -> Result<Tensor<T>> {
        let [c, h, w] = self.spec.input;
        if c != 1 || image.dims() != (w, h) {
            return Err(Error::shape(format!(
                "network expects {c}x{h}x{w} input, got a {}x{} grayscale image",
                image.width(),
                image.height()
            )));
        }
        Ok(image.to_tensor())
    }

    /// Class probabilities for one image.
    pub fn forward(&self, image: &GrayImage, mode: Mode, rng: &mut RngState) -> Result<Vec<f64>> {
        let x = self.image_tensor(image)?;
        let trace = self.forward_trace(&x, mode, rng)?;
        Ok(trace.probs().data().iter().map(|&v| v.to_f64()).collect())
    }

    /// Eval-mode probabilities; deterministic and safe to call concurrently.
    pub fn predict(&self, image: &GrayImage) -> Result<Vec<f64>> {
        self.forward(image, Mode::Eval, &mut RngState::new(0))
    }

    pub fn forward_trace(&self, input: &Tensor<T>, mode: Mode, rng: &mut RngState) -> Result<ForwardTrace<T>> {
        if input.shape() != self.spec.input {
            return Err(Error::shape(format!(
                "network expects input {:?}, got {:?}",
                self.spec.input,
                input.shape()
            )));
        }
        let n = self.spec.layers.len();
        let mut inputs = Vec::with_capacity(n + 1);
        let mut aux = Vec::with_capacity(n);
        let mut p = 0;
        let mut x = input.clone();
        for layer in &self.spec.layers {
            let (y, a) = match *layer {
                LayerSpec::Conv { pad, .. } => {
                    let y = conv2d(&x, &self.params.tensors[p], &self.params.tensors[p + 1], 1, pad)?;
                    p += 2;
                    (y, LayerAux::None)
                }
                LayerSpec::Linear { .. } => {
                    let y = linear(&x, &self.params.tensors[p], &self.params.tensors[p + 1])?;
                    p += 2;
                    (y, LayerAux::None)
                }
                LayerSpec::Relu => (relu(&x), LayerAux::None),
                LayerSpec::MaxPool2 => {
                    let out = maxpool2(&x)?;
                    (out.output, LayerAux::Pool(out.argmax))
                }
                LayerSpec::Dropout { rate } => {
                    let out = dropout(&x, rate, mode, rng)?;
                    (out.output, LayerAux::Dropout(out.mask))
                }
                LayerSpec::Flatten => {
                    let n = x.len();
                    (x.clone().reshape(vec![n])?, LayerAux::None)
                }
                LayerSpec::Softmax => (crate::tensor::softmax(&x), LayerAux::None),
            };
            inputs.push(std::mem::replace(&mut x, y));
            aux.push(a);
        }
        inputs.push(x);
        Ok(ForwardTrace { inputs, aux })
    }

    /// Cross-entropy loss of a traced pass and its gradient w.r.t. every
    /// parameter.
    pub fn backward(&self, trace: &ForwardTrace<T>, label: usize) -> Result<(T, Params<T>)> {
        let (loss, probs) = softmax_cross_entropy(trace.logits(), label)?;
        let mut grad = softmax_cross_entropy_backward(&probs, label)?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.params.tensors.len()];
        let mut p = self.params.tensors.len();
        let last = self.spec.layers.len() - 1;
        for (i, layer) in self.spec.layers.iter().enumerate().take(last).rev() {
            let input = &trace.inputs[i];
            grad = match (layer, &trace.aux[i]) {
                (LayerSpec::Conv { pad, .. }, _) => {
                    p -= 2;
                    let g = conv2d_backward(input, &self.params.tensors[p], 1, *pad, &grad)?;
                    let mut it = g.input_grads.into_iter();
                    let d_input = it.next().expect("input grad");
                    grads[p] = it.next();
                    grads[p + 1] = it.next();
                    d_input
                }
                (LayerSpec::Linear { .. }, _) => {
                    p -= 2;
                    let g = linear_backward(input, &self.params.tensors[p], &grad)?;
                    let mut it = g.input_grads.into_iter();
                    let d_input = it.next().expect("input grad");
                    grads[p] = it.next();
                    grads[p + 1] = it.next();
                    d_input
                }
                (LayerSpec::Relu, _) => relu_backward(input, &grad)?,
                (LayerSpec::MaxPool2, LayerAux::Pool(argmax)) => maxpool2_backward(input.shape(), argmax, &grad)?,
                (LayerSpec::Dropout { .. }, LayerAux::Dropout(mask)) => dropout_backward(&grad, mask.as_deref()),
                (LayerSpec::Flatten, _) => grad.reshape(input.shape().to_vec())?,
                _ => unreachable!("trace does not match spec"),
            };
        }
        let tensors = grads.into_iter().map(|g| g.expect("every parameter visited")).collect();
        Ok((loss, Params { tensors }))
    }

    /// Loss, probabilities and parameter gradients for one labelled input.
    pub fn loss_and_grads(
        &self,
        input: &Tensor<T>,
        label: usize,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(T, Tensor<T>, Params<T>)> {
        let trace = self.forward_trace(input, mode, rng)?;
        let (loss, grads) = self.backward(&trace, label)?;
        Ok((loss, trace.probs().clone(), grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_tiny;

    #[test]
    fn biases_zero_and_seed_reproducible() {
        let spec = build_tiny(7);
        let a = Network::<f32>::new(spec.clone(), 11).unwrap();
        let b = Network::<f32>::new(spec.clone(), 11).unwrap();
        let c = Network::<f32>::new(spec, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for bias in a.params().tensors.iter().skip(1).step_by(2) {
            assert!(bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn he_variance() {
        let spec = build_tiny(7);
        let net = Network::<f64>::new(spec, 3).unwrap();
        // linear 800→128 has 102400 draws with fan_in 800
        let w = &net.params().tensors[6];
        assert_eq!(w.shape(), [128, 800]);
        let n = w.len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / 800.0;
        assert!((var / target - 1.0).abs() < 0.2, "var {var} vs {target}");
    }

    #[test]
    fn zero_image_gives_distribution() {
        let net = Network::<f32>::new(build_tiny(7), 0).unwrap();
        let probs = net.predict(&GrayImage::filled(44, 44, 0.0)).unwrap();
        assert_eq!(probs.len(), 7);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        // zero input and zero biases make every logit zero
        assert!(probs.iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-6));
    }

    #[test]
    fn eval_forward_is_pure() {
        let net = Network::<f32>::new(build_tiny(7), 5).unwrap();
        let img = GrayImage::from_fn(44, 44, |x, y| ((x * y) % 13) as f32 / 12.0);
        assert_eq!(net.predict(&img).unwrap(), net.predict(&img).unwrap());
        assert!(net.predict(&GrayImage::filled(48, 48, 0.0)).is_err());
    }

    #[test]
    fn with_params_checks_shapes() {
        let net = Network::<f32>::new(build_tiny(7), 5).unwrap();
        let params = net.params().clone();
        assert!(Network::with_params(build_tiny(6), params.clone()).is_err());
        assert!(Network::with_params(build_tiny(7), params).is_ok());
    }
}
