//! Python bindings: images, saliency, cropping, networks, training,
//! evaluation and correlation.

use std::ops::ControlFlow;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use salex_core::augment;
use salex_core::dataset::{self, DatasetPartition, LabelTaxonomy};
use salex_core::image::{read_image, write_pgm};
use salex_core::model::{build_tiny, vgg19_custom, Checkpoint, TrainingMeta, DEFAULT_DROPOUT, DEFAULT_VGG_HIDDEN};
use salex_core::saliency::{self, SaliencyMap};
use salex_core::train::{self, TrainConfig};
use salex_core::{RngState, SpectralParams};

create_exception!(salex, SalexError, PyException);

fn py_err(e: salex_core::Error) -> PyErr {
    SalexError::new_err(e.to_string())
}

fn taxonomy(name: &str) -> PyResult<LabelTaxonomy> {
    LabelTaxonomy::by_name(name).ok_or_else(|| SalexError::new_err(format!("unknown taxonomy {name:?}")))
}

/// Grayscale image with pixel values in [0, 1].
#[pyclass(name = "GrayImage", module = "salex", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrayImage(salex_core::GrayImage);

#[pymethods]
impl PyGrayImage {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<f32>) -> PyResult<Self> {
        salex_core::GrayImage::new(width, height, pixels).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_u8(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        salex_core::GrayImage::from_u8(width, height, &data).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        read_image(&path).map(Self).map_err(py_err)
    }

    fn write_pgm(&self, path: PathBuf) -> PyResult<()> {
        write_pgm(&path, &self.0).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn pixels(&self) -> Vec<f32> {
        self.0.pixels().to_vec()
    }

    fn to_u8(&self) -> Vec<u8> {
        self.0.to_u8()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f32> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(SalexError::new_err(format!("({x}, {y}) outside the image")));
        }
        Ok(self.0.get(x, y))
    }

    fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> PyResult<Self> {
        self.0.crop(row, col, width, height).map(Self).map_err(py_err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.0.width(), self.0.height())
    }
}

/// Ordered list of labelled samples.
#[pyclass(name = "Dataset", module = "salex", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset(DatasetPartition);

#[pymethods]
impl PyDataset {
    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn labels(&self) -> Vec<usize> {
        self.0.samples.iter().map(|s| s.label).collect()
    }

    fn image(&self, index: usize) -> PyResult<PyGrayImage> {
        self.0
            .samples
            .get(index)
            .map(|s| PyGrayImage(s.image.clone()))
            .ok_or_else(|| SalexError::new_err(format!("sample {index} out of range")))
    }

    fn origin(&self, index: usize) -> PyResult<String> {
        self.0
            .samples
            .get(index)
            .map(|s| s.origin.to_string())
            .ok_or_else(|| SalexError::new_err(format!("sample {index} out of range")))
    }

    fn head(&self, n: usize) -> Self {
        Self(self.0.head(n))
    }

    /// `(train, test)` for one fold of a seeded k-fold split.
    fn fold_split(&self, k: usize, seed: u64, fold: usize) -> PyResult<(Self, Self)> {
        let (a, b) = self.0.fold_split(k, seed, fold).map_err(py_err)?;
        Ok((Self(a), Self(b)))
    }

    /// Same samples with every image replaced by its spectral-residual map.
    fn saliency_maps(&self, py: Python<'_>) -> PyResult<Self> {
        let backend = saliency::SaliencyBackend::Spectral(SpectralParams::default());
        py.detach(|| backend.map_partition(&self.0)).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Dataset({:?}, {} samples)", self.0.name, self.0.len())
    }
}

/// Parses a FER2013 CSV into `{"Training": ..., "PublicTest": ..., "PrivateTest": ...}`.
#[pyfunction]
fn read_fer2013_csv(path: PathBuf) -> PyResult<Vec<(String, PyDataset)>> {
    let fer = dataset::read_fer2013_csv(&path).map_err(py_err)?;
    Ok([fer.training, fer.public_test, fer.private_test]
        .into_iter()
        .map(|p| (p.name.clone(), PyDataset(p)))
        .collect())
}

/// Same as `read_fer2013_csv` for CSV text already in memory.
#[pyfunction]
fn parse_fer2013_csv(text: &str) -> PyResult<Vec<(String, PyDataset)>> {
    let fer = dataset::parse_fer2013_csv(text.as_bytes()).map_err(py_err)?;
    Ok([fer.training, fer.public_test, fer.private_test]
        .into_iter()
        .map(|p| (p.name.clone(), PyDataset(p)))
        .collect())
}

/// Loads `root/<class>/<image>` into one dataset.
#[pyfunction]
#[pyo3(signature = (root, taxonomy_name = "fer2013"))]
fn load_labeled_dir(root: PathBuf, taxonomy_name: &str) -> PyResult<PyDataset> {
    let loaded = dataset::load_labeled_dir(&root, &taxonomy(taxonomy_name)?).map_err(py_err)?;
    Ok(PyDataset(loaded.partition))
}

#[pyfunction]
fn kfold_split(n: usize, k: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    dataset::kfold_split(n, k, seed).map_err(py_err)
}

/// Spectral-residual saliency map, min-max normalised, same size as `image`.
#[pyfunction]
#[pyo3(signature = (image, working_size = 64))]
fn spectral_residual(image: &PyGrayImage, working_size: usize) -> PyResult<PyGrayImage> {
    let params = SpectralParams::with_working_size(working_size);
    saliency::spectral_residual(&image.0, &params)
        .map(|m| PyGrayImage(m.into_image()))
        .map_err(py_err)
}

/// `(1 - alpha) * face + alpha * normalised(map)`.
#[pyfunction]
#[pyo3(signature = (face, map, alpha = 0.5))]
fn overlay(face: &PyGrayImage, map: &PyGrayImage, alpha: f64) -> PyResult<PyGrayImage> {
    saliency::overlay(&face.0, &SaliencyMap::normalize(&map.0), alpha)
        .map(PyGrayImage)
        .map_err(py_err)
}

/// The five fixed 44x44 crops of a 48x48 image followed by their mirrors.
#[pyfunction]
fn ten_crop(image: &PyGrayImage) -> PyResult<Vec<PyGrayImage>> {
    augment::ten_crop(&image.0)
        .map(|v| v.into_iter().map(PyGrayImage).collect())
        .map_err(py_err)
}

#[pyfunction]
fn random_crops(image: &PyGrayImage, count: usize, seed: u64) -> PyResult<Vec<PyGrayImage>> {
    augment::random_crops(&image.0, count, &mut RngState::new(seed))
        .map(|v| v.into_iter().map(PyGrayImage).collect())
        .map_err(py_err)
}

#[pyfunction]
fn hflip(image: &PyGrayImage) -> PyGrayImage {
    PyGrayImage(augment::hflip(&image.0))
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    train::pearson(&x, &y).map_err(py_err)
}

/// Single-precision network with its training metadata.
#[pyclass(name = "Network", module = "salex")]
struct PyNetwork {
    ckpt: Checkpoint<f32>,
}

#[pymethods]
impl PyNetwork {
    /// Small three-block network for quick experiments.
    #[staticmethod]
    #[pyo3(signature = (classes = 7, seed = 0))]
    fn tiny(classes: usize, seed: u64) -> PyResult<Self> {
        Self::build(build_tiny(classes), seed)
    }

    /// VGG-19 style network for 44x44 inputs.
    #[staticmethod]
    #[pyo3(signature = (classes = 7, seed = 0, hidden = DEFAULT_VGG_HIDDEN, dropout = DEFAULT_DROPOUT))]
    fn vgg19(classes: usize, seed: u64, hidden: usize, dropout: f64) -> PyResult<Self> {
        Self::build(vgg19_custom(classes, hidden, dropout), seed)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Checkpoint::load(&path).map(|ckpt| Self { ckpt }).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.ckpt.save(&path).map_err(py_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.ckpt.to_bytes()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.ckpt.network.params().len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.ckpt.network.num_classes()
    }

    #[getter]
    fn spec_text(&self) -> String {
        self.ckpt.network.spec().to_text()
    }

    #[getter]
    fn epoch(&self) -> u64 {
        self.ckpt.meta.epoch
    }

    /// Class probabilities for one 44x44 crop.
    fn predict(&self, image: &PyGrayImage) -> PyResult<Vec<f64>> {
        self.ckpt.network.predict(&image.0).map_err(py_err)
    }

    /// Probabilities for a 48x48 sample, averaged over ten crops or from
    /// the centre crop.
    #[pyo3(signature = (image, tencrop = true))]
    fn predict_sample(&self, image: &PyGrayImage, tencrop: bool) -> PyResult<Vec<f64>> {
        train::predict_sample(&self.ckpt.network, &image.0, tencrop).map_err(py_err)
    }

    /// Continues training on `data`; returns `(epoch, mean_loss, train_acc)`
    /// per epoch.
    #[pyo3(signature = (
        data, epochs, learning_rate = 0.01, batch_size = 128, momentum = 0.9,
        seed = 0, crops_per_sample = 10
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        py: Python<'_>,
        data: &PyDataset,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        momentum: f64,
        seed: u64,
        crops_per_sample: usize,
    ) -> PyResult<Vec<(usize, f64, f64)>> {
        let config = TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            momentum,
            seed,
            crops_per_sample,
            ..TrainConfig::default()
        };
        let network = self.ckpt.network.clone();
        let outcome = py
            .detach(|| train::train_with(network, &data.0, &config, |_, _| ControlFlow::Continue(())))
            .map_err(py_err)?;
        let done = self.ckpt.meta.epoch;
        self.ckpt = outcome.checkpoint;
        self.ckpt.meta.epoch += done;
        Ok(outcome.log.iter().map(|e| (e.epoch, e.mean_loss, e.train_acc)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Network({} classes, {} parameters, epoch {})",
            self.ckpt.network.num_classes(),
            self.ckpt.network.params().len(),
            self.ckpt.meta.epoch
        )
    }
}

impl PyNetwork {
    fn build(spec: salex_core::NetworkSpec, seed: u64) -> PyResult<Self> {
        let network = salex_core::Network::new(spec, seed).map_err(py_err)?;
        Ok(Self {
            ckpt: Checkpoint::new(network, TrainingMeta { seed, ..Default::default() }),
        })
    }
}

/// Accuracy, confusion matrix and per-class recall of one evaluation.
#[pyclass(name = "EvalReport", module = "salex", frozen)]
struct PyEvalReport(train::EvalReport);

#[pymethods]
impl PyEvalReport {
    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<Self> {
        train::EvalReport::read_dir(&dir).map(Self).map_err(py_err)
    }

    /// Writes confusion.csv, normalized.csv and summary.csv into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.0.write_dir(&dir).map(|_| ()).map_err(py_err)
    }

    #[getter]
    fn accuracy(&self) -> f64 {
        self.0.accuracy
    }

    #[getter]
    fn chance_level(&self) -> f64 {
        self.0.chance_level
    }

    #[getter]
    fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal.clone()
    }

    #[getter]
    fn confusion(&self) -> Vec<Vec<u64>> {
        self.0.confusion.rows()
    }

    #[getter]
    fn normalized(&self) -> Vec<Vec<f64>> {
        self.0.normalized.clone()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.0.confusion.taxonomy().classes().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "EvalReport(accuracy={:.4}, samples={})",
            self.0.accuracy,
            self.0.confusion.total()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (network, data, taxonomy_name = "fer2013", tencrop = true))]
fn evaluate(
    py: Python<'_>,
    network: &PyNetwork,
    data: &PyDataset,
    taxonomy_name: &str,
    tencrop: bool,
) -> PyResult<PyEvalReport> {
    let tax = taxonomy(taxonomy_name)?;
    py.detach(|| train::evaluate(&network.ckpt.network, &data.0, &tax, tencrop))
        .map(PyEvalReport)
        .map_err(py_err)
}

#[pyfunction]
fn correlate_diagonals(a: &PyEvalReport, b: &PyEvalReport) -> PyResult<f64> {
    train::correlate_diagonals(&a.0, &b.0).map_err(py_err)
}

#[pymodule]
pub fn salex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SalexError", m.py().get_type::<SalexError>())?;
    m.add_class::<PyGrayImage>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(read_fer2013_csv, m)?)?;
    m.add_function(wrap_pyfunction!(parse_fer2013_csv, m)?)?;
    m.add_function(wrap_pyfunction!(load_labeled_dir, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_residual, m)?)?;
    m.add_function(wrap_pyfunction!(overlay, m)?)?;
    m.add_function(wrap_pyfunction!(ten_crop, m)?)?;
    m.add_function(wrap_pyfunction!(random_crops, m)?)?;
    m.add_function(wrap_pyfunction!(hflip, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(correlate_diagonals, m)?)?;
    Ok(())
}
