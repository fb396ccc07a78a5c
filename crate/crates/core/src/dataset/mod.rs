//! Dataset loading and partitioning: FER2013 CSV, labeled image
//! directories (CK+-style) and k-fold cross-validation.

mod fer2013;
mod kfold;
mod labeled_dir;

use std::fmt;
use std::path::PathBuf;

pub use fer2013::{parse_fer2013_csv, parse_fer2013_csv_lenient, read_fer2013_csv, Fer2013, Fer2013Report, RowError};
pub use kfold::kfold_split;
pub use labeled_dir::{load_labeled_dir, LabeledDir};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Side of every dataset sample.
pub const SAMPLE_SIZE: usize = 48;

/// Ordered class names; a label is an index into this list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTaxonomy {
    classes: Vec<String>,
}

impl LabelTaxonomy {
    /// Kaggle FER2013 emotion codes 0..=6.
    pub fn fer2013() -> Self {
        Self::new(["angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"])
    }

    /// CK+ seven-class layout (contempt replaces neutral).
    pub fn ckplus() -> Self {
        Self::new(["angry", "disgust", "fear", "happy", "sad", "surprise", "contempt"])
    }

    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Self {
        Self {
            classes: classes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "fer2013" => Some(Self::fer2013()),
            "ckplus" | "ck+" => Some(Self::ckplus()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, label: usize) -> &str {
        &self.classes[label]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }
}

/// Where a sample came from: the source partition tag and an identifier
/// unique within it (`line000002` for CSV rows, `happy/S005_001` for files).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Origin {
    pub source: String,
    pub id: String,
}

impl Origin {
    /// `<source>/<id>.<extension>`, the layout used for per-sample outputs.
    pub fn relative_path(&self, extension: &str) -> PathBuf {
        PathBuf::from(&self.source).join(format!("{}.{extension}", self.id))
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source, self.id)
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: GrayImage,
    pub label: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone)]
pub struct DatasetPartition {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl DatasetPartition {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        Self {
            name: name.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// New partition holding the samples at `indices`, in that order.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        Self::new(name, indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// First `n` samples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        Self::new(self.name.clone(), self.samples.iter().take(n).cloned().collect())
    }

    /// `(train, test)` for fold `fold` of a seeded `k`-fold split; the test
    /// partition is named `Fold<fold>`.
    pub fn fold_split(&self, k: usize, seed: u64, fold: usize) -> Result<(Self, Self)> {
        let folds = kfold_split(self.len(), k, seed)?;
        if fold >= k {
            return Err(Error::invalid(format!("fold {fold} out of range for k = {k}")));
        }
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        Ok((
            self.select(format!("{}-train{fold}", self.name), &train),
            self.select(format!("Fold{fold}"), &folds[fold]),
        ))
    }
}

/// Per-class sample counts for labels `0..num_classes`.
pub fn class_histogram(partition: &DatasetPartition, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for s in &partition.samples {
        counts[s.label] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: usize, id: usize) -> Sample {
        Sample {
            image: GrayImage::filled(SAMPLE_SIZE, SAMPLE_SIZE, 0.0),
            label,
            origin: Origin {
                source: "T".into(),
                id: format!("s{id}"),
            },
        }
    }

    #[test]
    fn taxonomies_are_exact() {
        assert_eq!(
            LabelTaxonomy::fer2013().classes(),
            ["angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"]
        );
        assert_eq!(
            LabelTaxonomy::ckplus().classes(),
            ["angry", "disgust", "fear", "happy", "sad", "surprise", "contempt"]
        );
        assert_eq!(LabelTaxonomy::fer2013().index_of("happy"), Some(3));
    }

    #[test]
    fn histogram_cases() {
        assert_eq!(class_histogram(&DatasetPartition::new("e", vec![]), 7), vec![0; 7]);
        let one_each = DatasetPartition::new("p", (0..7).map(|c| sample(c, c)).collect());
        assert_eq!(class_histogram(&one_each, 7), vec![1; 7]);
    }

    #[test]
    fn fold_split_is_disjoint_and_exhaustive() {
        let p = DatasetPartition::new("all", (0..23).map(|i| sample(i % 7, i)).collect());
        let mut seen = std::collections::HashSet::new();
        for fold in 0..5 {
            let (train, test) = p.fold_split(5, 3, fold).unwrap();
            assert_eq!(train.len() + test.len(), 23);
            assert_eq!(test.name, format!("Fold{fold}"));
            for s in &test.samples {
                assert!(seen.insert(s.origin.clone()));
                assert!(!train.samples.iter().any(|t| t.origin == s.origin));
            }
        }
        assert_eq!(seen.len(), 23);
        assert!(p.fold_split(5, 3, 5).is_err());
    }

    #[test]
    fn origin_path() {
        let o = Origin {
            source: "Training".into(),
            id: "line000002".into(),
        };
        assert_eq!(o.relative_path("pgm"), PathBuf::from("Training/line000002.pgm"));
        assert_eq!(o.to_string(), "Training/line000002");
    }
}
