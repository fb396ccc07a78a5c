use std::path::PathBuf;

use salex_core::dataset::{load_labeled_dir, read_fer2013_csv, DatasetPartition, LabelTaxonomy};
use salex_core::saliency::SaliencyBackend;
use salex_core::SpectralParams;

use crate::args::DatasetArgs;
use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub enum Source {
    Fer2013(PathBuf),
    Dir(PathBuf),
}

impl Source {
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.split_once(':') {
            Some(("fer2013", path)) if !path.is_empty() => Ok(Source::Fer2013(path.into())),
            Some(("dir", path)) if !path.is_empty() => Ok(Source::Dir(path.into())),
            _ => Err(CliError::usage(format!(
                "dataset {spec:?} must be fer2013:<csv> or dir:<root>"
            ))),
        }
    }
}

pub struct Dataset {
    pub spec: String,
    pub source: Source,
    pub taxonomy: LabelTaxonomy,
    pub partitions: Vec<DatasetPartition>,
}

impl Dataset {
    pub fn load(spec: &str, taxonomy: &str) -> Result<Self> {
        let source = Source::parse(spec)?;
        let taxonomy = LabelTaxonomy::by_name(taxonomy)
            .ok_or_else(|| CliError::usage(format!("unknown taxonomy {taxonomy:?}; use fer2013 or ckplus")))?;
        let partitions = match &source {
            Source::Fer2013(path) => {
                if taxonomy != LabelTaxonomy::fer2013() {
                    return Err(CliError::usage("FER2013 files always use the fer2013 taxonomy"));
                }
                let fer = read_fer2013_csv(path)?;
                vec![fer.training, fer.public_test, fer.private_test]
            }
            Source::Dir(root) => {
                vec![load_labeled_dir(root, &taxonomy)?.partition]
            }
        };
        Ok(Self {
            spec: spec.to_string(),
            source,
            taxonomy,
            partitions,
        })
    }

    pub fn is_fer2013(&self) -> bool {
        matches!(self.source, Source::Fer2013(_))
    }

    pub fn partition(&self, name: &str) -> Result<&DatasetPartition> {
        self.partitions.iter().find(|p| p.name == name).ok_or_else(|| {
            let names: Vec<&str> = self.partitions.iter().map(|p| p.name.as_str()).collect();
            CliError::usage(format!("no partition {name:?}; available: {}", names.join(", ")))
        })
    }

    /// Training set: FER2013 `Training`, a whole directory, or the
    /// complement of one fold.
    pub fn training(&self, args: &DatasetArgs, fold: Option<usize>) -> Result<DatasetPartition> {
        let part = match (self.is_fer2013(), args.folds, fold) {
            (true, Some(_), _) | (true, _, Some(_)) => {
                return Err(CliError::usage("--folds/--fold apply to dir: datasets only"))
            }
            (true, None, None) => self.partition("Training")?.clone(),
            (false, None, None) => self.partitions[0].clone(),
            (false, Some(k), Some(i)) => self.folds(k, args.split_seed, i)?.0,
            (false, Some(_), None) => return Err(CliError::usage("--folds needs --fold <i> when training")),
            (false, None, Some(_)) => return Err(CliError::usage("--fold needs --folds <k>")),
        };
        Ok(limit(part, args.limit))
    }

    /// Evaluation set named by `--partition`.
    pub fn evaluation(&self, args: &DatasetArgs, name: Option<&str>) -> Result<DatasetPartition> {
        let part = if self.is_fer2013() {
            if args.folds.is_some() {
                return Err(CliError::usage("--folds applies to dir: datasets only"));
            }
            self.partition(name.unwrap_or("PrivateTest"))?.clone()
        } else {
            match (name.unwrap_or("all"), args.folds) {
                ("all", None) => self.partitions[0].clone(),
                ("all", Some(_)) => return Err(CliError::usage("--folds needs --partition fold:<i>")),
                (other, folds) => {
                    let i = other
                        .strip_prefix("fold:")
                        .and_then(|i| i.parse::<usize>().ok())
                        .ok_or_else(|| CliError::usage(format!("partition {other:?} must be all or fold:<i>")))?;
                    let k = folds.ok_or_else(|| CliError::usage("fold partitions need --folds <k>"))?;
                    self.folds(k, args.split_seed, i)?.1
                }
            }
        };
        Ok(limit(part, args.limit))
    }

    fn folds(&self, k: usize, seed: u64, fold: usize) -> Result<(DatasetPartition, DatasetPartition)> {
        if fold >= k {
            return Err(CliError::usage(format!("--fold {fold} must be below --folds {k}")));
        }
        Ok(self.partitions[0].fold_split(k, seed, fold)?)
    }
}

pub fn limit(part: DatasetPartition, n: Option<usize>) -> DatasetPartition {
    match n {
        Some(n) => part.head(n),
        None => part,
    }
}

pub fn parse_backend(spec: &str) -> Result<SaliencyBackend> {
    match spec.split_once(':') {
        None if spec == "spectral" => Ok(SaliencyBackend::Spectral(SpectralParams::default())),
        Some(("external", dir)) if !dir.is_empty() => Ok(SaliencyBackend::External(dir.into())),
        _ => Err(CliError::usage(format!(
            "saliency backend {spec:?} must be spectral or external:<dir>"
        ))),
    }
}
