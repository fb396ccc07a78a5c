use std::path::{Path, PathBuf};

use log::warn;

use super::{DatasetPartition, LabelTaxonomy, Origin, Sample, SAMPLE_SIZE};
use crate::error::{Error, Result};
use crate::image::{read_image, resize_bilinear};

/// Partition tag for samples loaded from a directory tree.
pub const LABELED_SOURCE: &str = "Labeled";

#[derive(Debug, Clone)]
pub struct LabeledDir {
    pub partition: DatasetPartition,
    /// Human-readable notes, e.g. classes with no images.
    pub warnings: Vec<String>,
}

/// Loads `<root>/<class_name>/<file>` for every class of `taxonomy`.
///
/// Files are read in name order and resized to 48×48. Subdirectories that
/// are not class names are an error; hidden entries are skipped; a missing
/// or empty class directory yields a warning. Identical files are kept as
/// separate samples.
pub fn load_labeled_dir(root: &Path, taxonomy: &LabelTaxonomy) -> Result<LabeledDir> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !path.is_dir() {
            continue;
        }
        if taxonomy.index_of(&name).is_none() {
            return Err(Error::invalid(format!(
                "unknown class directory {:?} in {} (expected one of {})",
                name,
                root.display(),
                taxonomy.classes().join(", ")
            )));
        }
        dirs.push(name);
    }

    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for (label, class) in taxonomy.classes().iter().enumerate() {
        let files = if dirs.contains(class) {
            list_files(&root.join(class))?
        } else {
            Vec::new()
        };
        if files.is_empty() {
            let msg = format!("class {class:?} has no images under {}", root.display());
            warn!("{msg}");
            warnings.push(msg);
        }
        for path in files {
            let image = read_image(&path)?;
            let image = resize_bilinear(&image, SAMPLE_SIZE, SAMPLE_SIZE)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            samples.push(Sample {
                image,
                label,
                origin: Origin {
                    source: LABELED_SOURCE.to_string(),
                    id: format!("{class}/{stem}"),
                },
            });
        }
    }
    Ok(LabeledDir {
        partition: DatasetPartition::new(LABELED_SOURCE, samples),
        warnings,
    })
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if entry.file_name().to_string_lossy().starts_with('.') || !path.is_file() {
            continue;
        }
        files.push(path);
    }
    files.sort();
    Ok(files)
}
