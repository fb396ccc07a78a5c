//! Optional TOML file of training defaults. Every key is optional; command
//! line flags take precedence.

use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub arch: Option<String>,
    pub input_mode: Option<String>,
    pub saliency_backend: Option<String>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub momentum: Option<f64>,
    pub dropout_rate: Option<f64>,
    pub seed: Option<u64>,
    pub crops_per_sample: Option<usize>,
    pub crop_sampling: Option<String>,
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.message().to_string();
            CliError::usage(format!("{}: {msg}", path.display()))
        })
    }
}
