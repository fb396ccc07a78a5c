use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::error::{CliError, Result};

/// `key: value` record of a run, written last so it lists every artifact.
pub struct Manifest {
    started: Instant,
    entries: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let mut m = Self {
            started: Instant::now(),
            entries: Vec::new(),
            outputs: Vec::new(),
        };
        m.set("tool", format!("salex {}", env!("CARGO_PKG_VERSION")));
        m.set("command", command);
        m.set("started_unix", unix);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k}: {v}\n"));
        }
        for p in &self.outputs {
            s.push_str(&format!("output: {}\n", p.display()));
        }
        s.push_str(&format!("wall_clock_secs: {:.3}\n", self.started.elapsed().as_secs_f64()));
        s
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.output(path);
        std::fs::write(path, self.render()).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}
