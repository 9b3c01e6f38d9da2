//! Run manifests: every artifact-producing command writes one beside its
//! outputs, with enough information to reproduce every file.

use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: String,
    /// Full configuration snapshot of the run.
    pub config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    /// File names created by the run, relative to the manifest.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, file_name: impl Into<String>) {
        self.outputs.push(file_name.into());
    }

    /// Write `<dir>/<command>_manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(format!("{}_manifest.json", self.command));
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body)
            .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
    }
}
