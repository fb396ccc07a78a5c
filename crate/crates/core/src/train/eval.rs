//! Evaluation: per-sample prediction (centre crop or ten-crop average),
//! confusion matrices, row-normalised recalls, and their CSV exchange
//! format.

use std::path::Path;

use rayon::prelude::*;

use super::stats::pearson;
use crate::augment::{average_predictions, ten_crop, CropSpec};
use crate::dataset::{DatasetPartition, LabelTaxonomy};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::model::Network;
use crate::tensor::{argmax, Scalar};

/// Anything that maps a 44×44 crop to class probabilities.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn predict_crop(&self, crop: &GrayImage) -> Result<Vec<f64>>;
}

impl<T: Scalar> Classifier for Network<T> {
    fn num_classes(&self) -> usize {
        Network::num_classes(self)
    }

    fn predict_crop(&self, crop: &GrayImage) -> Result<Vec<f64>> {
        self.predict(crop)
    }
}

/// Probabilities for a 48×48 sample: the mean over the ten crops, or the
/// centre crop alone.
pub fn predict_sample<C: Classifier + ?Sized>(model: &C, image: &GrayImage, tencrop: bool) -> Result<Vec<f64>> {
    if tencrop {
        let preds = ten_crop(image)?
            .iter()
            .map(|c| model.predict_crop(c))
            .collect::<Result<Vec<_>>>()?;
        average_predictions(&preds)
    } else {
        model.predict_crop(&CropSpec::center().apply(image)?)
    }
}

/// K×K counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    taxonomy: LabelTaxonomy,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(taxonomy: LabelTaxonomy) -> Self {
        let k = taxonomy.len();
        Self {
            taxonomy,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(taxonomy: LabelTaxonomy, rows: &[Vec<u64>]) -> Result<Self> {
        let k = taxonomy.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::shape(format!("confusion counts must be {k}x{k}")));
        }
        Ok(Self {
            taxonomy,
            counts: rows.concat(),
        })
    }

    pub fn taxonomy(&self) -> &LabelTaxonomy {
        &self.taxonomy
    }

    pub fn num_classes(&self) -> usize {
        self.taxonomy.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        let k = self.num_classes();
        assert!(truth < k && predicted < k, "class index out of range");
        self.counts[truth * k + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes() + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        let k = self.num_classes();
        &self.counts[truth * k..(truth + 1) * k]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.num_classes()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Header of class names, then K lines of K counts.
    pub fn to_csv(&self) -> String {
        let mut s = self.taxonomy.classes().join(",");
        s.push('\n');
        for i in 0..self.num_classes() {
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty confusion CSV".into(),
        })?;
        let taxonomy = LabelTaxonomy::new(header.split(',').map(|c| c.trim().to_string()));
        let mut rows = Vec::new();
        for (n, line) in lines {
            let row = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<u64>().map_err(|_| Error::Parse {
                        line: n as u64 + 1,
                        message: format!("count {v:?} is not a non-negative integer"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_counts(taxonomy, &rows)
    }
}

/// Each row divided by its sum; all-zero rows stay zero.
pub fn row_normalize(cm: &ConfusionMatrix) -> Vec<Vec<f64>> {
    (0..cm.num_classes())
        .map(|i| {
            let row = cm.row(i);
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub normalized: Vec<Vec<f64>>,
    /// Per-class recall, the diagonal of `normalized`.
    pub diagonal: Vec<f64>,
    pub chance_level: f64,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let normalized = row_normalize(&confusion);
        let diagonal = (0..confusion.num_classes()).map(|i| normalized[i][i]).collect();
        Self {
            accuracy: confusion.accuracy(),
            chance_level: 1.0 / confusion.num_classes() as f64,
            confusion,
            normalized,
            diagonal,
        }
    }

    pub fn normalized_csv(&self) -> String {
        let mut s = self.confusion.taxonomy().classes().join(",");
        s.push('\n');
        for row in &self.normalized {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "accuracy,chance_level,samples\n{:.6},{:.6},{}\n",
            self.accuracy,
            self.chance_level,
            self.confusion.total()
        )
    }

    /// Writes `confusion.csv`, `normalized.csv` and `summary.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("confusion.csv", self.confusion.to_csv()),
            ("normalized.csv", self.normalized_csv()),
            ("summary.csv", self.summary_csv()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    /// Rebuilds a report from the `confusion.csv` in `dir`.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("confusion.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let cm = ConfusionMatrix::from_csv(&text).map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(Self::from_confusion(cm))
    }
}

/// Classifies every sample, taking the arg-max (lowest index on ties) of
/// the ten-crop average or of the centre crop.
pub fn evaluate<C: Classifier + ?Sized>(
    model: &C,
    partition: &DatasetPartition,
    taxonomy: &LabelTaxonomy,
    tencrop: bool,
) -> Result<EvalReport> {
    if partition.is_empty() {
        return Err(Error::invalid(format!(
            "partition {:?} has no samples to evaluate",
            partition.name
        )));
    }
    if model.num_classes() != taxonomy.len() {
        return Err(Error::invalid(format!(
            "model predicts {} classes but the taxonomy has {}",
            model.num_classes(),
            taxonomy.len()
        )));
    }
    let predicted = partition
        .samples
        .par_iter()
        .map(|s| {
            if s.label >= taxonomy.len() {
                return Err(Error::invalid(format!("sample {} has label {}", s.origin, s.label)));
            }
            predict_sample(model, &s.image, tencrop).map(|p| argmax(&p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new(taxonomy.clone());
    for (s, p) in partition.samples.iter().zip(predicted) {
        cm.record(s.label, p);
    }
    Ok(EvalReport::from_confusion(cm))
}

/// Pearson correlation of two reports' per-class recall vectors.
pub fn correlate_diagonals(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    if a.confusion.taxonomy() != b.confusion.taxonomy() {
        return Err(Error::invalid(format!(
            "reports use different classes: [{}] vs [{}]",
            a.confusion.taxonomy().classes().join(","),
            b.confusion.taxonomy().classes().join(",")
        )));
    }
    pearson(&a.diagonal, &b.diagonal)
}
