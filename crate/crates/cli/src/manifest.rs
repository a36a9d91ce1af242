//! Run manifests written next to every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub pgd: String,
    pub dataset_format: u32,
    pub checkpoint_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            pgd: env!("CARGO_PKG_VERSION").to_string(),
            dataset_format: pgd_core::benchmarks::DATASET_FORMAT_VERSION,
            checkpoint_format: pgd_core::nn::FORMAT_VERSION,
        }
    }
}

/// Everything needed to tell how an output was produced. Holds no
/// timestamps, so identical runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_hash: String,
    pub data_hash: String,
    pub denoiser_hash: String,
    pub versions: Versions,
    pub config: ExperimentConfig,
    pub origins: BTreeMap<String, String>,
    /// Command-specific facts (method label, aborted chains, ...).
    pub details: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, output: &Path, cfg: &ExperimentConfig, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            output: output
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            seed,
            config_hash: cfg.hash(),
            data_hash: cfg.data_hash(),
            denoiser_hash: cfg.denoiser_hash(),
            versions: Versions::default(),
            config: cfg.clone(),
            origins: cfg.origins().into_iter().map(|(k, v)| (k, v.to_string())).collect(),
            details: BTreeMap::new(),
        }
    }

    pub fn detail(mut self, key: &str, value: impl ToString) -> Self {
        self.details.insert(key.to_string(), value.to_string());
        self
    }

    /// Writes `<output>.manifest.json`.
    pub fn write_next_to(&self, output: &Path) -> Result<PathBuf> {
        let path = manifest_path(output);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn read_manifest(output: &Path) -> Result<Manifest> {
    let path = manifest_path(output);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
}
