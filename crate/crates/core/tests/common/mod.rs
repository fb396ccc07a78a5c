//! Helpers shared by the integration tests: brute-force reference
//! implementations, random data, and synthetic datasets.
#![allow(dead_code)]

use std::path::PathBuf;

use salex_core::dataset::{DatasetPartition, Origin, Sample};
use salex_core::{GrayImage, RngState, Tensor};

pub fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform() * 2.0 - 1.0).collect()).unwrap()
}

/// Direct seven-loop convolution, reading zero outside the input.
pub fn naive_conv2d(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (o, k) = (weight.shape()[0], weight.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let x = |ci: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
            0.0
        } else {
            input.data()[ci * h * w + y as usize * w + xx as usize]
        }
    };
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias.data()[oc];
                for ci in 0..c {
                    for ki in 0..k {
                        for kj in 0..k {
                            let y = (i * stride + ki) as isize - pad as isize;
                            let xx = (j * stride + kj) as isize - pad as isize;
                            acc += weight.data()[((oc * c + ci) * k + ki) * k + kj] * x(ci, y, xx);
                        }
                    }
                }
                out[(oc * oh + i) * ow + j] = acc;
            }
        }
    }
    Tensor::new(vec![o, oh, ow], out).unwrap()
}

pub fn naive_maxpool2(input: &Tensor<f64>) -> Tensor<f64> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    m = m.max(input.data()[ci * h * w + (2 * i + di) * w + 2 * j + dj]);
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}

pub fn naive_linear(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
    let (m, n) = (weight.shape()[0], weight.shape()[1]);
    let out = (0..m)
        .map(|i| bias.data()[i] + (0..n).map(|j| weight.data()[i * n + j] * input.data()[j]).sum::<f64>())
        .collect();
    Tensor::new(vec![m], out).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Pearson coefficient from raw sums,
/// `(nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²))`.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// 48×48 faces-like samples: each class has a bright blob at its own spot
/// on a noisy background, so a small network can separate them.
pub fn synthetic_partition(name: &str, per_class: usize, classes: usize, seed: u64) -> DatasetPartition {
    let mut rng = RngState::new(seed);
    let mut samples = Vec::new();
    for i in 0..per_class * classes {
        let label = i % classes;
        let angle = label as f64 / classes as f64 * std::f64::consts::TAU;
        let (cx, cy) = (24.0 + 12.0 * angle.cos(), 24.0 + 12.0 * angle.sin());
        let jitter = (rng.uniform() * 4.0 - 2.0, rng.uniform() * 4.0 - 2.0);
        let noise: Vec<f64> = (0..48 * 48).map(|_| rng.uniform() * 0.2).collect();
        let image = GrayImage::from_fn(48, 48, |x, y| {
            let dx = x as f64 - cx - jitter.0;
            let dy = y as f64 - cy - jitter.1;
            (0.8 * (-(dx * dx + dy * dy) / 30.0).exp() + noise[y * 48 + x]) as f32
        });
        samples.push(Sample {
            image,
            label,
            origin: Origin {
                source: name.to_string(),
                id: format!("s{i:05}"),
            },
        });
    }
    DatasetPartition::new(name, samples)
}

/// Location of the official FER2013 CSV, if the environment provides one.
pub fn fer2013_csv() -> Option<PathBuf> {
    std::env::var_os("SALEX_FER2013_CSV").map(PathBuf::from).filter(|p| p.is_file())
}

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_POINTS: u64 = 20;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradSummary {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a ReLU or
    /// pooling boundary.
    pub skipped: usize,
}

impl GradSummary {
    fn merge(&mut self, r: salex_core::tensor::GradCheckReport) {
        self.max_rel_error = self.max_rel_error.max(r.max_rel_error);
        self.checked += r.checked;
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error <= GRAD_TOL
    }
}

/// Scalarises an op's output as `Σ out ⊙ r` so the upstream gradient is `r`.
fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn grad_suite_conv2d() -> GradSummary {
    use salex_core::tensor::{conv2d, conv2d_backward, gradient_check};
    let mut s = GradSummary::default();
    for p in 0..GRAD_POINTS {
        let mut rng = RngState::derive(100, &[p]);
        let (stride, pad) = if p % 2 == 0 { (1, 1) } else { (2, 0) };
        let x = random_tensor(&[2, 6, 6], &mut rng);
        let w = random_tensor(&[3, 2, 3, 3], &mut rng);
        let b = random_tensor(&[3], &mut rng);
        let out = conv2d(&x, &w, &b, stride, pad).unwrap();
        let r = random_tensor(out.shape(), &mut rng);
        let g = conv2d_backward(&x, &w, stride, pad, &r).unwrap();
        s.merge(gradient_check(|t| dot(&conv2d(t, &w, &b, stride, pad).unwrap(), &r), &x, g.input(), GRAD_EPS));
        s.merge(gradient_check(|t| dot(&conv2d(&x, t, &b, stride, pad).unwrap(), &r), &w, g.weight(), GRAD_EPS));
        s.merge(gradient_check(|t| dot(&conv2d(&x, &w, t, stride, pad).unwrap(), &r), &b, g.bias(), GRAD_EPS));
    }
    s
}

pub fn grad_suite_linear() -> GradSummary {
    use salex_core::tensor::{gradient_check, linear, linear_backward};
    let mut s = GradSummary::default();
    for p in 0..GRAD_POINTS {
        let mut rng = RngState::derive(200, &[p]);
        let x = random_tensor(&[9], &mut rng);
        let w = random_tensor(&[5, 9], &mut rng);
        let b = random_tensor(&[5], &mut rng);
        let r = random_tensor(&[5], &mut rng);
        let g = linear_backward(&x, &w, &r).unwrap();
        s.merge(gradient_check(|t| dot(&linear(t, &w, &b).unwrap(), &r), &x, g.input(), GRAD_EPS));
        s.merge(gradient_check(|t| dot(&linear(&x, t, &b).unwrap(), &r), &w, g.weight(), GRAD_EPS));
        s.merge(gradient_check(|t| dot(&linear(&x, &w, t).unwrap(), &r), &b, g.bias(), GRAD_EPS));
    }
    s
}

pub fn grad_suite_softmax_ce() -> GradSummary {
    use salex_core::tensor::{gradient_check, softmax_cross_entropy, softmax_cross_entropy_backward};
    let mut s = GradSummary::default();
    for p in 0..GRAD_POINTS {
        let mut rng = RngState::derive(300, &[p]);
        let mut logits = random_tensor(&[7], &mut rng);
        logits.scale(3.0);
        let label = rng.below(7);
        let (_, probs) = softmax_cross_entropy(&logits, label).unwrap();
        let g = softmax_cross_entropy_backward(&probs, label).unwrap();
        s.merge(gradient_check(|t| softmax_cross_entropy(t, label).unwrap().0, &logits, &g, GRAD_EPS));
    }
    s
}

/// End-to-end check of the tiny preset on 44×44 inputs, with a fixed
/// dropout mask, over `coords_per_tensor` sampled coordinates of every
/// parameter tensor.
pub fn grad_suite_tiny_network(coords_per_tensor: usize) -> GradSummary {
    use salex_core::model::{build_tiny, Network};
    use salex_core::tensor::{gradient_check_at, Mode};
    let spec = build_tiny(7);
    let mut s = GradSummary::default();
    for p in 0..GRAD_POINTS {
        let mut rng = RngState::derive(400, &[p]);
        let mut net = Network::<f64>::new(spec.clone(), 1000 + p).unwrap();
        // nonzero biases so the point is generic
        for t in net.params_mut().tensors.iter_mut().skip(1).step_by(2) {
            for v in t.data_mut() {
                *v = (rng.uniform() - 0.5) * 0.1;
            }
        }
        let input = Tensor::new(vec![1, 44, 44], (0..44 * 44).map(|_| rng.uniform()).collect()).unwrap();
        let label = rng.below(7);
        let dropout_seed = rng.below(1 << 30) as u64;
        let run = |n: &Network<f64>| n.forward_trace(&input, Mode::Train, &mut RngState::new(dropout_seed)).unwrap();
        let base = run(&net);
        let base_sig = base.kink_signature(&spec);
        let (_, grads) = net.backward(&base, label).unwrap();

        for (ti, analytic) in grads.tensors.iter().enumerate() {
            let point = net.params().tensors[ti].clone();
            let with = |t: &Tensor<f64>| {
                let mut n = net.clone();
                n.params_mut().tensors[ti] = t.clone();
                n
            };
            let mut coords = Vec::new();
            for _ in 0..coords_per_tensor {
                let i = rng.below(point.len());
                let smooth = [GRAD_EPS, -GRAD_EPS].iter().all(|&d| {
                    let mut t = point.clone();
                    t.data_mut()[i] += d;
                    run(&with(&t)).kink_signature(&spec) == base_sig
                });
                if smooth {
                    coords.push(i);
                } else {
                    s.skipped += 1;
                }
            }
            let f = |t: &Tensor<f64>| {
                let n = with(t);
                n.backward(&run(&n), label).unwrap().0
            };
            s.merge(gradient_check_at(f, &point, analytic, GRAD_EPS, &coords));
        }
    }
    s
}

/// Largest deviation of conv2d / maxpool2 / linear from the brute-force
/// loops over `trials` random cases with inputs up to 4×8×8.
pub fn oracle_suite(trials: u64) -> [f64; 3] {
    use salex_core::tensor::{conv2d, linear, maxpool2};
    let mut worst = [0.0f64; 3];
    for t in 0..trials {
        let mut rng = RngState::derive(500, &[t]);
        let c = 1 + rng.below(4);
        let h = 1 + rng.below(8);
        let w = 1 + rng.below(8);
        let x = random_tensor(&[c, h, w], &mut rng);

        let k = [1, 3, 5][rng.below(3)];
        let pad = rng.below(k / 2 + 2);
        let stride = 1 + rng.below(2);
        if h + 2 * pad >= k && w + 2 * pad >= k {
            let o = 1 + rng.below(4);
            let wt = random_tensor(&[o, c, k, k], &mut rng);
            let b = random_tensor(&[o], &mut rng);
            let got = conv2d(&x, &wt, &b, stride, pad).unwrap();
            let want = naive_conv2d(&x, &wt, &b, stride, pad);
            assert_eq!(got.shape(), want.shape());
            worst[0] = worst[0].max(max_abs_diff(got.data(), want.data()));
        }

        if h >= 2 && w >= 2 {
            let got = maxpool2(&x).unwrap().output;
            let want = naive_maxpool2(&x);
            assert_eq!(got.shape(), want.shape());
            worst[1] = worst[1].max(max_abs_diff(got.data(), want.data()));
        }

        let n = c * h * w;
        let m = 1 + rng.below(8);
        let flat = x.clone().reshape(vec![n]).unwrap();
        let wt = random_tensor(&[m, n], &mut rng);
        let b = random_tensor(&[m], &mut rng);
        let got = linear(&flat, &wt, &b).unwrap();
        worst[2] = worst[2].max(max_abs_diff(got.data(), naive_linear(&flat, &wt, &b).data()));
    }
    worst
}

/// Training setup of the overfit check: tiny preset, small batches, one
/// fresh crop per image per epoch.
pub fn overfit_config(seed: u64) -> salex_core::train::TrainConfig {
    salex_core::train::TrainConfig {
        epochs: 200,
        batch_size: 8,
        crops_per_sample: 1,
        seed,
        ..Default::default()
    }
}

/// Trains until ten-crop accuracy on the training set itself reaches 1.
/// Returns the epoch at which it did (if any), the final accuracy, and the
/// checkpoint bytes.
pub fn overfit_run(training: &DatasetPartition, seed: u64) -> (Option<usize>, f64, Vec<u8>) {
    use std::ops::ControlFlow;
    use salex_core::dataset::LabelTaxonomy;
    use salex_core::model::{build_tiny, Network};
    use salex_core::train::{evaluate, train_with, with_dropout};

    let config = overfit_config(seed);
    let taxonomy = LabelTaxonomy::fer2013();
    let net = Network::<f32>::new(with_dropout(&build_tiny(7), config.dropout_rate), seed).unwrap();
    let mut reached = None;
    let mut acc = 0.0;
    let outcome = train_with(net, training, &config, |stats, net| {
        acc = evaluate(net, training, &taxonomy, true).unwrap().accuracy;
        if acc == 1.0 {
            reached = Some(stats.epoch);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    (reached, acc, outcome.checkpoint.to_bytes())
}

/// Worst inversion error and worst relative Parseval error of `fft2d` over
/// `trials` random complex inputs with sides drawn from {16, 32, 64}.
pub fn fft_identity_suite(trials: u64) -> (f64, f64) {
    use num_complex::Complex64;
    use salex_core::saliency::{fft2d, Direction};
    let mut worst = (0.0f64, 0.0f64);
    for t in 0..trials {
        let mut rng = RngState::derive(600, &[t]);
        let w = [16, 32, 64][rng.below(3)];
        let h = [16, 32, 64][rng.below(3)];
        let x: Vec<Complex64> = (0..w * h)
            .map(|_| Complex64::new(rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0))
            .collect();
        let spectrum = fft2d(&x, w, h, Direction::Forward).unwrap();
        let back = fft2d(&spectrum, w, h, Direction::Inverse).unwrap();
        let inv = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let spectral: f64 = spectrum.iter().map(|v| v.norm_sqr()).sum::<f64>() / (w * h) as f64;
        worst.0 = worst.0.max(inv);
        worst.1 = worst.1.max((energy - spectral).abs() / energy);
    }
    worst
}

/// 48×48 image with a soft bright blob centred at (cx, cy).
pub fn blob_image(size: usize, cx: f64, cy: f64) -> GrayImage {
    GrayImage::from_fn(size, size, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        (0.1 + 0.9 * (-d2 / 8.0).exp()) as f32
    })
}

pub fn argmax_xy(image: &GrayImage) -> (usize, usize) {
    let p = image.pixels();
    let i = (0..p.len()).fold(0, |best, i| if p[i] > p[best] { i } else { best });
    (i % image.width(), i / image.width())
}

/// Distance in pixels between a blob's true centre and the saliency
/// maximum at working resolution, worst over several positions.
pub fn blob_localisation_error() -> f64 {
    use salex_core::saliency::spectral_residual_working;
    use salex_core::SpectralParams;
    let params = SpectralParams::default();
    let mut worst = 0.0f64;
    for (cx, cy) in [(20.0, 37.0), (32.0, 32.0), (12.0, 15.0), (50.0, 44.0)] {
        let map = spectral_residual_working(&blob_image(64, cx, cy), &params).unwrap();
        let (x, y) = argmax_xy(map.image());
        worst = worst.max((x as f64 - cx).abs().max((y as f64 - cy).abs()));
    }
    worst
}

/// Header plus one well-formed row per usage and emotion.
pub fn synthetic_fer_csv() -> String {
    let mut s = String::from("emotion,pixels,Usage\n");
    for (i, usage) in ["Training", "PublicTest", "PrivateTest"].iter().enumerate() {
        for emotion in 0..7 {
            let px: Vec<String> = (0..2304).map(|p| ((p * 7 + emotion * 31 + i) % 256).to_string()).collect();
            s.push_str(&format!("{emotion},{},{usage}\n", px.join(" ")));
        }
    }
    s
}

/// One malformed row per failure class, each paired with a fragment the
/// error message must contain. Rows are meant to follow one good row, so
/// they sit on line 3.
pub fn malformed_fer_rows() -> Vec<(String, &'static str)> {
    let good = vec!["9"; 2304].join(" ");
    let mut bad_token = vec!["9"; 2304];
    bad_token[17] = "nine";
    let mut too_big = vec!["9"; 2304];
    too_big[3] = "300";
    vec![
        (format!("0,{good}\n"), "columns"),
        (format!("0,{},Training,extra\n", good), "columns"),
        (format!("x,{good},Training\n"), "emotion"),
        (format!("8,{good},Training\n"), "emotion 8"),
        (format!("0,{},Training\n", bad_token.join(" ")), "pixel 17"),
        (format!("0,{},Training\n", too_big.join(" ")), "pixel 3"),
        (format!("0,{},Training\n", vec!["9"; 2000].join(" ")), "2000"),
        (format!("0,{},Training\n", vec!["9"; 2400].join(" ")), "2400"),
        (format!("0,{good},Holdout\n"), "Usage"),
    ]
}

/// True when every malformed class is rejected with a `line 3:` error
/// naming the fault.
pub fn fer_parser_rejects_all(rows: &[(String, &str)]) -> Result<(), String> {
    use salex_core::dataset::parse_fer2013_csv;
    let good = format!("0,{},Training\n", vec!["9"; 2304].join(" "));
    for (row, needle) in rows {
        let csv = format!("emotion,pixels,Usage\n{good}{row}");
        match parse_fer2013_csv(csv.as_bytes()) {
            Ok(_) => return Err(format!("accepted malformed row expecting {needle:?}")),
            Err(e) => {
                let msg = e.to_string();
                if !msg.starts_with("line 3:") || !msg.contains(needle) {
                    return Err(format!("bad error {msg:?} for {needle:?}"));
                }
            }
        }
    }
    Ok(())
}

/// Saves a trained-looking checkpoint to disk and reloads it; true when
/// parameters, spec and metadata come back bit for bit.
pub fn checkpoint_file_roundtrip(dir: &std::path::Path) -> bool {
    use salex_core::model::{build_tiny, Checkpoint, Network, TrainingMeta};
    let mut net = Network::<f32>::new(build_tiny(7), 77).unwrap();
    // awkward values: subnormals, negative zero, extremes
    let t = &mut net.params_mut().tensors[1];
    t.data_mut()[..4].copy_from_slice(&[f32::MIN_POSITIVE / 3.0, -0.0, f32::MAX, 1.0e-30]);
    let ckpt = Checkpoint::new(net, TrainingMeta { epoch: 17, seed: u64::MAX, loss: 0.1 + 0.2 });
    let path = dir.join("net.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    let bits = |c: &Checkpoint<f32>| c.network.params().flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    bits(&back) == bits(&ckpt)
        && back.network.spec() == ckpt.network.spec()
        && back.meta.loss.to_bits() == ckpt.meta.loss.to_bits()
        && back.meta == ckpt.meta
        && std::fs::read(&path).unwrap() == back.to_bytes()
}

/// PGM write→read on disk for random 8-bit images of assorted sizes.
pub fn pgm_file_roundtrip(dir: &std::path::Path, trials: u64) -> bool {
    use salex_core::image::{read_image, write_pgm};
    (0..trials).all(|t| {
        let mut rng = RngState::derive(700, &[t]);
        let (w, h) = (1 + rng.below(64), 1 + rng.below(64));
        let bytes: Vec<u8> = (0..w * h).map(|_| rng.below(256) as u8).collect();
        let img = GrayImage::from_u8(w, h, &bytes).unwrap();
        let path = dir.join(format!("img{t}.pgm"));
        write_pgm(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        back == img && back.to_u8() == bytes
    })
}

/// Training setup of the desk-scale runs: tiny preset, 20 epochs, one
/// fresh crop per image per epoch, batches of 32.
pub fn desk_config(seed: u64) -> salex_core::train::TrainConfig {
    salex_core::train::TrainConfig {
        epochs: 20,
        batch_size: 32,
        crops_per_sample: 1,
        seed,
        ..Default::default()
    }
}

/// Trains the tiny preset on `training` and evaluates it with ten-crop
/// averaging on `test`, after mapping both to saliency maps if asked.
pub fn desk_run(
    training: &DatasetPartition,
    test: &DatasetPartition,
    mode: salex_core::train::InputMode,
    seed: u64,
) -> salex_core::train::EvalReport {
    use salex_core::dataset::LabelTaxonomy;
    use salex_core::model::build_tiny;
    use salex_core::saliency::SaliencyBackend;
    use salex_core::train::{evaluate, prepare_inputs, train};
    let backend = SaliencyBackend::Spectral(Default::default());
    let training = prepare_inputs(training, mode, &backend).unwrap();
    let test = prepare_inputs(test, mode, &backend).unwrap();
    let mut config = desk_config(seed);
    config.input_mode = mode;
    let out = train::<f32>(&build_tiny(7), &training, &config).unwrap();
    evaluate(&out.checkpoint.network, &test, &LabelTaxonomy::fer2013(), true).unwrap()
}
