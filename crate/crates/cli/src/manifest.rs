use std::path::Path;

use orthowgan::wgan::{Budget, DatasetSpec, TrainConfig};
use serde::Serialize;

use crate::error::CliError;

/// Build identifier baked in at compile time from `git describe`.
pub const BUILD_ID: &str = env!("ORTHOWGAN_BUILD_ID");

#[derive(Debug, Clone, Serialize)]
pub struct Divergence {
    pub iter: usize,
    pub reason: String,
}

/// run_manifest.json: what was run, with which build, and how far it got.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub build_id: &'static str,
    pub command: &'static str,
    pub scheme: String,
    pub seed: u64,
    pub budget: Budget,
    /// Iteration count the run was planned for; under a wall-clock budget
    /// this is the calibrated estimate.
    pub planned_iters: usize,
    pub achieved_iters: usize,
    pub status: &'static str,
    pub divergence: Option<Divergence>,
    pub checkpoint_written: bool,
    pub log_timing: bool,
    pub config: TrainConfig,
    pub data: DatasetSpec,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::format(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}
