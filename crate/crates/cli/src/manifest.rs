use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::PipelineConfig;

/// What a command read, wrote and counted, plus the full configuration.
/// Contains no timestamps, so identical runs write identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub config: &'a PipelineConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'a str, config: &'a PipelineConfig) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.inputs.push(p.display().to_string());
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.outputs.push(p.display().to_string());
        self
    }

    /// Writes `run_manifest.<command>.json` into the output directory.
    pub fn write(&self) -> Result<()> {
        let path = self
            .config
            .out_path(&format!("run_manifest.{}.json", self.command));
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
