//! Declarative experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pgd_core::diffusion::{DenoiserConfig, DiffusionSchedule};
use pgd_core::preference::{DiversityCriterion, GradientMode, PreferenceConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Pairs drawn per epoch; absent means the offline dataset size `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs_per_epoch: Option<usize>,
    pub criterion: DiversityCriterion,
    pub prune_fraction: f64,
    pub gradient_mode: GradientMode,
    /// Empty means `[2d, 2d, 512]`.
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSection {
    pub weight: f64,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    /// Offline dataset size.
    pub n: usize,
    /// Seed of the shared offline dataset and its split.
    pub data_seed: u64,
    /// Training and sampling seeds, one run each.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub diffusion: DiffusionSection,
    pub classifier: ClassifierSection,
    pub guidance: GuidanceSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "zdt2".into(),
            n: 5000,
            data_seed: 0,
            seeds: (0..5).collect(),
            out_dir: PathBuf::from("out"),
            diffusion: DiffusionSection {
                steps: 1000,
                beta_start: 1e-4,
                beta_end: 0.02,
                epochs: 200,
                learning_rate: 5e-4,
                weight_decay: 0.01,
                batch_size: 256,
                hidden: vec![512, 512],
                time_embed_dim: 128,
            },
            classifier: ClassifierSection {
                epochs: 500,
                learning_rate: 1e-5,
                batch_size: 32,
                pairs_per_epoch: None,
                criterion: DiversityCriterion::Crowding,
                prune_fraction: 0.3,
                gradient_mode: GradientMode::LogProb,
                hidden: Vec::new(),
                time_embed_dim: 128,
            },
            guidance: GuidanceSection {
                weight: 10.0,
                budget: 256,
                max_grad_norm: None,
            },
        }
    }
}

/// Fields whose defaults are the published method settings; every other
/// field is a local decision.
const PAPER_FIELDS: &[&str] = &[
    "seeds",
    "diffusion.beta_start",
    "diffusion.beta_end",
    "diffusion.epochs",
    "diffusion.learning_rate",
    "diffusion.hidden",
    "classifier.epochs",
    "classifier.learning_rate",
    "classifier.criterion",
    "classifier.prune_fraction",
    "guidance.weight",
    "guidance.budget",
];

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, serde_json::Value>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn flat(cfg: &ExperimentConfig) -> BTreeMap<String, serde_json::Value> {
    let mut out = BTreeMap::new();
    flatten("", &serde_json::to_value(cfg).expect("config serializes"), &mut out);
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    /// Desk-scale preset: the defaults with a 200-step schedule.
    pub fn fast() -> Self {
        let mut cfg = Self::default();
        cfg.diffusion.steps = 200;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        // Any label works for imported data; generation checks the name.
        if self.problem.is_empty() || self.problem.contains(['/', '\\']) || self.problem.starts_with('.') {
            bail!("problem name `{}` cannot be used as a directory name", self.problem);
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        self.schedule()?;
        if !(self.classifier.prune_fraction > 0.0 && self.classifier.prune_fraction <= 1.0) {
            bail!("prune_fraction must lie in (0, 1]");
        }
        if self.guidance.budget == 0 {
            bail!("guidance budget must be positive");
        }
        if !(self.guidance.weight >= 0.0 && self.guidance.weight.is_finite()) {
            bail!("guidance weight must be finite and non-negative");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        Ok(DiffusionSchedule::linear(
            self.diffusion.steps,
            self.diffusion.beta_start,
            self.diffusion.beta_end,
        )?)
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        let d = &self.diffusion;
        DenoiserConfig {
            hidden: d.hidden.clone(),
            time_embed_dim: d.time_embed_dim,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
        }
    }

    pub fn preference_config(&self, criterion: DiversityCriterion) -> PreferenceConfig {
        let c = &self.classifier;
        PreferenceConfig {
            hidden: c.hidden.clone(),
            time_embed_dim: c.time_embed_dim,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            criterion,
            pairs_per_epoch: Some(c.pairs_per_epoch.unwrap_or(self.n)),
            ..PreferenceConfig::default()
        }
    }

    /// Directory holding every artifact of this problem.
    pub fn problem_dir(&self) -> PathBuf {
        self.out_dir.join(&self.problem)
    }

    /// SHA-256 of the canonical JSON form, without the output directory so
    /// that moving a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut fields = flat(self);
        fields.remove("out_dir");
        sha256_hex(serde_json::to_string(&fields).expect("json").as_bytes())
    }

    fn hash_of(&self, prefixes: &[&str]) -> String {
        let subset: BTreeMap<_, _> = flat(self)
            .into_iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k == p || k.starts_with(&format!("{p}."))))
            .collect();
        sha256_hex(serde_json::to_string(&subset).expect("json").as_bytes())
    }

    /// Hash of everything the offline dataset depends on.
    pub fn data_hash(&self) -> String {
        self.hash_of(&["problem", "n", "data_seed"])
    }

    /// Hash of everything a trained denoiser depends on (besides its seed).
    pub fn denoiser_hash(&self) -> String {
        self.hash_of(&["problem", "n", "data_seed", "diffusion"])
    }

    /// Hash of everything a trained classifier depends on, for `criterion`.
    pub fn classifier_hash(&self, criterion: DiversityCriterion) -> String {
        let mut cfg = self.clone();
        cfg.classifier.criterion = criterion;
        cfg.classifier.gradient_mode = GradientMode::LogProb;
        cfg.hash_of(&[
            "problem",
            "n",
            "data_seed",
            "diffusion.steps",
            "diffusion.beta_start",
            "diffusion.beta_end",
            "classifier",
        ])
    }

    /// `paper` or `decision` for every field. A published setting that has
    /// been overridden counts as a decision.
    pub fn origins(&self) -> BTreeMap<String, &'static str> {
        let defaults = flat(&Self::default());
        flat(self)
            .into_iter()
            .map(|(k, v)| {
                let origin = if PAPER_FIELDS.contains(&k.as_str()) && defaults.get(&k) == Some(&v) {
                    "paper"
                } else {
                    "decision"
                };
                (k, origin)
            })
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Applies every field present in the TOML file at `path` on top of
    /// `self`; fields absent from the file keep their current values.
    pub fn overlay_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        self.overlay_toml(&text)
            .with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn overlay_toml(&self, text: &str) -> Result<Self> {
        let overlay: toml::Value = toml::from_str(text)?;
        let mut base = toml::Value::try_from(self)?;
        merge(&mut base, overlay);
        Ok(base.try_into()?)
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
