use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use diffcam::{LayerToggles, Precision};
use serde::{Deserialize, Serialize};

use crate::io::{sidecar_path, write_json};
use crate::CliResult;

/// Everything needed to repeat a run, written next to its main output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments as given.
    pub argv: Vec<String>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub params: Option<PathBuf>,
    pub toggles: Option<LayerToggles>,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub threads: Option<usize>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_owned(),
            argv: std::env::args().collect(),
            inputs: BTreeMap::new(),
            params: None,
            toggles: None,
            seed: None,
            precision: None,
            threads: None,
            outputs: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.insert(role.to_owned(), path.to_path_buf());
    }

    /// Stamps the elapsed time and writes the sidecar of `primary`.
    pub fn finish(mut self, primary: &Path, started: Instant) -> CliResult<()> {
        self.wall_time_s = started.elapsed().as_secs_f64();
        write_json(&sidecar_path(primary), &self)
    }
}
