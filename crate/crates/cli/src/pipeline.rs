//! Dataset generation, training, sampling, evaluation and sweeps, with
//! on-disk caching keyed by configuration hashes.
//!
//! Layout under `out_dir/<problem>/`:
//!
//! ```text
//! dataset.csv                      shared by every seed
//! seed-<s>/denoiser.json           + denoiser-log.csv
//! seed-<s>/classifier-<crit>.json  + classifier-<crit>-log.csv
//! seed-<s>/designs-<method>.csv    raw designs and objectives, one row per chain
//! seed-<s>/report-<method>.csv     task,method,seed,metric,value
//! ablate-<sweep>.csv
//! ```
//!
//! Every output gets a `<file>.manifest.json` next to it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use ndarray::{Array2, Axis};
use pgd_core::benchmarks::{format_value, generate_dataset, load_dataset, prune_top_fraction, save_dataset};
use pgd_core::diffusion::train_denoiser;
use pgd_core::metrics::{aggregate, delta_spread, hypervolume, IndicatorReport, SeedIndicators, Summary};
use pgd_core::nn::{load_checkpoint, save_checkpoint, Mlp};
use pgd_core::preference::{train_preference, DiversityCriterion, GradientMode, LabeledDesigns};
use pgd_core::sampler::{
    guided_sample, mean_front_distance, sample_trajectory_probe, select_reference, unguided_sample,
    GuidanceConfig, SampleOutput,
};
use pgd_core::{OfflineDataset, Problem};

use crate::config::ExperimentConfig;
use crate::manifest::{read_manifest, Manifest};

/// Guidance weights of the weight sweep.
pub const WEIGHT_SWEEP: [f64; 5] = [0.0, 5.0, 10.0, 20.0, 50.0];

pub const CRITERION_SWEEP: [DiversityCriterion; 3] = [
    DiversityCriterion::Crowding,
    DiversityCriterion::HypervolumeImprovement,
    DiversityCriterion::None,
];

/// A stored artifact was produced under a different configuration.
#[derive(Debug)]
pub struct HashMismatch {
    pub path: PathBuf,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for HashMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} was produced by a different configuration (hash {} vs {}); retrain or pass --allow-hash-mismatch",
            self.path.display(),
            short(&self.found),
            short(&self.expected)
        )
    }
}

impl std::error::Error for HashMismatch {}

/// A required input file is missing.
#[derive(Debug)]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub hint: &'static str,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing {}; run `{}` first", self.path.display(), self.hint)
    }
}

impl std::error::Error for MissingArtifact {}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Unconditional,
    Guided {
        weight: f64,
        criterion: DiversityCriterion,
        mode: GradientMode,
    },
}

impl Method {
    /// File-name-safe label, e.g. `pgd-w10-crowding` or `unconditional`.
    pub fn label(&self) -> String {
        match self {
            Method::Unconditional => "unconditional".into(),
            Method::Guided { weight, criterion, mode } => {
                let mut s = format!("pgd-w{weight}-{criterion}");
                if *mode == GradientMode::RawProb {
                    s.push_str("-raw");
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Weight,
    Criterion,
}

impl std::str::FromStr for Sweep {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w" | "weight" => Ok(Sweep::Weight),
            "criterion" => Ok(Sweep::Criterion),
            other => bail!("unknown sweep `{other}` (expected `w` or `criterion`)"),
        }
    }
}

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub seed: u64,
    pub weight: f64,
    pub criterion: DiversityCriterion,
    pub indicators: SeedIndicators,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub task: String,
    pub method: String,
    pub metric: &'static str,
    pub summary: Summary,
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    pub allow_hash_mismatch: bool,
    pub parallel_seeds: bool,
    dataset: OnceLock<OfflineDataset>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn opt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), format_value)
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| anyhow!("{}:{line}: `{field}` is not a number", path.display()))
}

/// Designs with their chain ids; objectives are `NA` until evaluated.
#[derive(Debug)]
struct DesignTable {
    x: Array2<f64>,
    y: Option<Array2<f64>>,
    chains: Vec<usize>,
    seed: u64,
}

impl DesignTable {
    fn to_csv(&self, n_obj: usize) -> String {
        let header: Vec<String> = (0..self.x.ncols())
            .map(|i| format!("x{i}"))
            .chain((0..n_obj).map(|i| format!("y{i}")))
            .chain(["chain".to_string(), "seed".to_string()])
            .collect();
        let rows = self.x.rows().into_iter().enumerate().map(|(i, xr)| {
            let ys: Vec<String> = match &self.y {
                Some(y) => y.row(i).iter().map(|&v| format_value(v)).collect(),
                None => vec!["NA".to_string(); n_obj],
            };
            xr.iter()
                .map(|&v| format_value(v))
                .chain(ys)
                .chain([self.chains[i].to_string(), self.seed.to_string()])
                .collect()
        });
        csv_text(&header, rows)
    }

    fn read(path: &Path, dim: usize, n_obj: usize) -> Result<Self> {
        if !path.exists() {
            return Err(MissingArtifact { path: path.to_path_buf(), hint: "pgd sample" }.into());
        }
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let expected = DesignTable {
            x: Array2::zeros((0, dim)),
            y: None,
            chains: Vec::new(),
            seed: 0,
        }
        .to_csv(n_obj);
        if header.join(",") != expected.trim_end() {
            bail!("{}: header `{}` does not match {dim} variables and {n_obj} objectives", path.display(), header.join(","));
        }
        let (mut x, mut chains, mut seed) = (Vec::new(), Vec::new(), 0);
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            if record.len() != header.len() {
                bail!("{}:{line}: expected {} fields, found {}", path.display(), header.len(), record.len());
            }
            for f in record.iter().take(dim) {
                x.push(parse_f64(f, path, line)?);
            }
            let int = |f: &str| -> Result<u64> {
                f.parse().map_err(|_| anyhow!("{}:{line}: `{f}` is not an integer", path.display()))
            };
            chains.push(int(&record[dim + n_obj])? as usize);
            seed = int(&record[dim + n_obj + 1])?;
        }
        Ok(Self {
            x: Array2::from_shape_vec((chains.len(), dim), x)?,
            y: None,
            chains,
            seed,
        })
    }
}

/// Hypervolume and Δ-spread of raw objective vectors, both computed in
/// the dataset's normalized objective space.
pub fn indicators<P: AsRef<[f64]>>(dataset: &OfflineDataset, y: &[P], seed: u64) -> Result<SeedIndicators> {
    let stats = dataset.objective_stats();
    let normalized = y
        .iter()
        .map(|row| stats.normalize(row.as_ref()))
        .collect::<pgd_core::Result<Vec<_>>>()?;
    let hv = hypervolume(&normalized, &stats.reference_point())?;
    let extremes = match dataset.problem().and_then(Problem::front_extremes) {
        Some(ex) => Some(
            ex.iter()
                .map(|e| stats.normalize(e))
                .collect::<pgd_core::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(SeedIndicators {
        seed,
        hypervolume: hv,
        delta_spread: delta_spread(&normalized, extremes.as_deref()),
    })
}

/// Indicators of the dataset's own non-dominated rows.
pub fn dataset_indicators(dataset: &OfflineDataset) -> Result<SeedIndicators> {
    let y = dataset.y_rows();
    let best: Vec<&[f64]> = dataset.nondominated().into_iter().map(|i| y[i]).collect();
    indicators(dataset, &best, dataset.split_seed())
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            allow_hash_mismatch: false,
            parallel_seeds: false,
            dataset: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.cfg.problem_dir().join("dataset.csv")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.cfg.problem_dir().join(format!("seed-{seed}"))
    }

    pub fn denoiser_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("denoiser.json")
    }

    pub fn classifier_path(&self, seed: u64, criterion: DiversityCriterion) -> PathBuf {
        self.seed_dir(seed).join(format!("classifier-{criterion}.json"))
    }

    pub fn designs_path(&self, seed: u64, method: &Method) -> PathBuf {
        self.seed_dir(seed).join(format!("designs-{}.csv", method.label()))
    }

    pub fn report_path(&self, seed: u64, method: &Method) -> PathBuf {
        self.seed_dir(seed).join(format!("report-{}.csv", method.label()))
    }

    /// The method configured by `guidance` and `classifier`.
    pub fn configured_method(&self) -> Method {
        Method::Guided {
            weight: self.cfg.guidance.weight,
            criterion: self.cfg.classifier.criterion,
            mode: self.cfg.classifier.gradient_mode,
        }
    }

    fn check_hash(&self, path: &Path, expected: &str, found: Option<&str>) -> Result<()> {
        let found = found.unwrap_or("none");
        if found == expected {
            return Ok(());
        }
        let err = HashMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: found.to_string(),
        };
        if self.allow_hash_mismatch {
            warn!("{err}");
            Ok(())
        } else {
            Err(err.into())
        }
    }

    /// Runs `f` once per configured seed, concurrently with
    /// `parallel_seeds`. Results follow the order of `seeds`.
    pub fn for_each_seed<T: Send>(&self, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
        if !self.parallel_seeds || self.cfg.seeds.len() < 2 {
            return self.cfg.seeds.iter().map(|&s| f(s)).collect();
        }
        // Load shared state before the threads race for it.
        self.dataset()?;
        let f = &f;
        std::thread::scope(|scope| {
            let handles: Vec<_> = self.cfg.seeds.iter().map(|&s| scope.spawn(move || f(s))).collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| anyhow!("seed worker panicked"))?)
                .collect()
        })
    }

    // ---- data ----

    /// Generates the offline dataset, or keeps the existing file when it
    /// was produced by the same data settings.
    pub fn gen_data(&self) -> Result<PathBuf> {
        let path = self.dataset_path();
        if path.exists() {
            if let Ok(m) = read_manifest(&path) {
                if m.data_hash == self.cfg.data_hash() {
                    info!("dataset {} is up to date", path.display());
                    return Ok(path);
                }
            }
        }
        let problem = Problem::by_name(&self.cfg.problem)?;
        info!("generating {} rows of {}", self.cfg.n, problem.name());
        let dataset = generate_dataset(&problem, self.cfg.n, self.cfg.data_seed)?;
        self.store_dataset(&path, &dataset, None)?;
        Ok(path)
    }

    /// Copies an external dataset CSV into the problem directory. Files
    /// without a sidecar load with no evaluator attached.
    pub fn import_data(&self, source: &Path) -> Result<PathBuf> {
        let dataset = load_dataset(source)?;
        let path = self.dataset_path();
        self.store_dataset(&path, &dataset, Some(source))?;
        Ok(path)
    }

    fn store_dataset(&self, path: &Path, dataset: &OfflineDataset, source: Option<&Path>) -> Result<()> {
        std::fs::create_dir_all(self.cfg.problem_dir())?;
        save_dataset(path, dataset, true)?;
        let mut m = Manifest::new("gen-data", path, &self.cfg, None)
            .detail("rows", dataset.len())
            .detail("nondominated", dataset.nondominated().len());
        if let Some(src) = source {
            m = m.detail("source", src.display());
        }
        m.write_next_to(path)?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<&OfflineDataset> {
        if let Some(ds) = self.dataset.get() {
            return Ok(ds);
        }
        let path = self.dataset_path();
        if !path.exists() {
            return Err(MissingArtifact { path, hint: "pgd gen-data" }.into());
        }
        let found = read_manifest(&path).ok().map(|m| m.data_hash);
        self.check_hash(&path, &self.cfg.data_hash(), found.as_deref())?;
        let ds = load_dataset(&path)?;
        Ok(self.dataset.get_or_init(|| ds))
    }

    /// Generates the dataset when it is missing, then loads it.
    pub fn ensure_dataset(&self) -> Result<&OfflineDataset> {
        if !self.dataset_path().exists() {
            self.gen_data()?;
        }
        self.dataset()
    }

    // ---- training ----

    fn cached_model(&self, path: &Path, hash_key: &str, expected: &str) -> Result<Option<Mlp>> {
        if !path.exists() {
            return Ok(None);
        }
        let ckpt = load_checkpoint(path)?;
        if ckpt.metadata.get(hash_key).map(String::as_str) == Some(expected) {
            info!("reusing {}", path.display());
            Ok(Some(ckpt.model))
        } else {
            info!("{} is stale; retraining", path.display());
            Ok(None)
        }
    }

    /// Trains the denoiser for `seed` unless an up-to-date checkpoint exists.
    pub fn train_denoiser(&self, seed: u64) -> Result<Mlp> {
        let path = self.denoiser_path(seed);
        let hash = self.cfg.denoiser_hash();
        if let Some(model) = self.cached_model(&path, "denoiser_hash", &hash)? {
            return Ok(model);
        }
        let ds = self.dataset()?;
        let sched = self.cfg.schedule()?;
        info!("seed {seed}: training denoiser ({} epochs)", self.cfg.diffusion.epochs);
        let trained = train_denoiser(
            ds.train_x().view(),
            ds.valid_x().view(),
            &sched,
            &self.cfg.denoiser_config(),
            seed,
        )?;
        std::fs::create_dir_all(self.seed_dir(seed))?;
        let meta = BTreeMap::from([
            ("denoiser_hash".to_string(), hash),
            ("seed".to_string(), seed.to_string()),
            ("best_epoch".to_string(), trained.best_epoch.to_string()),
        ]);
        save_checkpoint(&path, &trained.model, meta)?;
        let log_path = self.seed_dir(seed).join("denoiser-log.csv");
        let header = ["epoch", "train_loss", "valid_loss"].map(String::from);
        let rows = trained
            .log
            .iter()
            .map(|e| vec![e.epoch.to_string(), format_value(e.train_loss), format_value(e.valid_loss)]);
        write_text(&log_path, &csv_text(&header, rows))?;
        for p in [&path, &log_path] {
            Manifest::new("train", p, &self.cfg, Some(seed))
                .detail("network", "denoiser")
                .detail("best_epoch", trained.best_epoch)
                .write_next_to(p)?;
        }
        Ok(trained.model)
    }

    /// Trains the preference classifier on the pruned dataset, with labels
    /// from normalized objectives.
    pub fn train_classifier(&self, seed: u64, criterion: DiversityCriterion) -> Result<Mlp> {
        let path = self.classifier_path(seed, criterion);
        let hash = self.cfg.classifier_hash(criterion);
        if let Some(model) = self.cached_model(&path, "classifier_hash", &hash)? {
            return Ok(model);
        }
        let ds = self.dataset()?;
        let pruned = prune_top_fraction(ds, self.cfg.classifier.prune_fraction)?;
        let y = pruned.normalized_objectives();
        let train_y = y.select(Axis(0), pruned.train_indices());
        let valid_y = y.select(Axis(0), pruned.valid_indices());
        let train_x = pruned.train_x();
        let valid_x = pruned.valid_x();
        let sched = self.cfg.schedule()?;
        info!(
            "seed {seed}: training {criterion} classifier on {} rows ({} epochs)",
            pruned.len(),
            self.cfg.classifier.epochs
        );
        let trained = train_preference(
            LabeledDesigns { x: train_x.view(), y: train_y.view() },
            LabeledDesigns { x: valid_x.view(), y: valid_y.view() },
            &sched,
            &self.cfg.preference_config(criterion),
            &ds.objective_stats().reference_point(),
            seed,
        )?;
        std::fs::create_dir_all(self.seed_dir(seed))?;
        let best = trained.log.iter().find(|e| e.epoch == trained.best_epoch);
        let meta = BTreeMap::from([
            ("classifier_hash".to_string(), hash),
            ("seed".to_string(), seed.to_string()),
            ("criterion".to_string(), criterion.to_string()),
            ("best_epoch".to_string(), trained.best_epoch.to_string()),
        ]);
        save_checkpoint(&path, &trained.model, meta)?;
        let log_path = self.seed_dir(seed).join(format!("classifier-{criterion}-log.csv"));
        let header = ["epoch", "train_loss", "pairs", "valid_loss", "valid_accuracy"].map(String::from);
        let rows = trained.log.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                format_value(e.train_loss),
                e.pairs.to_string(),
                format_value(e.valid_loss),
                format_value(e.valid_accuracy),
            ]
        });
        write_text(&log_path, &csv_text(&header, rows))?;
        for p in [&path, &log_path] {
            let mut m = Manifest::new("train", p, &self.cfg, Some(seed))
                .detail("network", "classifier")
                .detail("criterion", criterion)
                .detail("best_epoch", trained.best_epoch);
            if let Some(e) = best {
                m = m.detail("valid_accuracy", format_value(e.valid_accuracy));
            }
            m.write_next_to(p)?;
        }
        Ok(trained.model)
    }

    /// `train` for every seed: the denoiser and the configured classifier.
    pub fn train(&self) -> Result<()> {
        self.dataset()?;
        self.for_each_seed(|seed| {
            self.train_denoiser(seed)?;
            self.train_classifier(seed, self.cfg.classifier.criterion)
        })?;
        Ok(())
    }

    fn load_trained(&self, path: &Path, key: &str, expected: &str) -> Result<Mlp> {
        if !path.exists() {
            return Err(MissingArtifact { path: path.to_path_buf(), hint: "pgd train" }.into());
        }
        let ckpt = load_checkpoint(path)?;
        self.check_hash(path, expected, ckpt.metadata.get(key).map(String::as_str))?;
        Ok(ckpt.model)
    }

    // ---- sampling and evaluation ----

    /// Samples `budget` designs with stored checkpoints and writes them in
    /// raw design coordinates.
    pub fn sample(&self, seed: u64, method: &Method) -> Result<SampleOutput> {
        let ds = self.dataset()?;
        let sched = self.cfg.schedule()?;
        let denoiser = self.load_trained(&self.denoiser_path(seed), "denoiser_hash", &self.cfg.denoiser_hash())?;
        let mut gcfg = GuidanceConfig {
            weight: 0.0,
            mode: GradientMode::LogProb,
            n: self.cfg.guidance.budget,
            seed,
            max_grad_norm: self.cfg.guidance.max_grad_norm,
        };
        let out = match *method {
            Method::Unconditional => unguided_sample(&denoiser, &sched, &gcfg)?,
            Method::Guided { weight, criterion, mode } => {
                let path = self.classifier_path(seed, criterion);
                let classifier = self.load_trained(&path, "classifier_hash", &self.cfg.classifier_hash(criterion))?;
                gcfg.weight = weight;
                gcfg.mode = mode;
                let reference = select_reference(ds)?;
                guided_sample(&denoiser, &classifier, &sched, &reference, &gcfg)?
            }
        };
        let path = self.designs_path(seed, method);
        self.write_designs(&path, ds, &out, seed)?;
        Manifest::new("sample", &path, &self.cfg, Some(seed))
            .detail("method", method.label())
            .detail("chains", gcfg.n)
            .detail("aborted", out.aborted.len())
            .detail("max_shift", format_value(out.max_shift))
            .write_next_to(&path)?;
        if !out.aborted.is_empty() {
            warn!("seed {seed}: {} chains diverged and were dropped", out.aborted.len());
        }
        Ok(out)
    }

    fn write_designs(&self, path: &Path, ds: &OfflineDataset, out: &SampleOutput, seed: u64) -> Result<()> {
        let mut raw = Array2::zeros(out.designs.raw_dim());
        for (mut r, x) in raw.rows_mut().into_iter().zip(out.designs.rows()) {
            let v = ds.denormalize_design(x.as_slice().expect("standard layout"));
            r.assign(&ndarray::ArrayView1::from(&v));
        }
        let table = DesignTable {
            x: raw,
            y: None,
            chains: out.chain_ids.clone(),
            seed,
        };
        write_text(path, &table.to_csv(ds.n_obj()))
    }

    /// Evaluates stored designs with the problem's true objectives and
    /// writes objective and indicator files.
    pub fn evaluate(&self, seed: u64, method: &Method) -> Result<SeedIndicators> {
        let ds = self.dataset()?;
        let problem = ds.problem().ok_or_else(|| {
            anyhow!("dataset {} has no known problem, so designs cannot be evaluated", self.dataset_path().display())
        })?;
        let designs = self.designs_path(seed, method);
        let mut table = DesignTable::read(&designs, ds.dim(), ds.n_obj())?;
        let mut y = Array2::zeros((table.x.nrows(), ds.n_obj()));
        for (mut yr, xr) in y.rows_mut().into_iter().zip(table.x.rows()) {
            let clamped: Vec<f64> = xr
                .iter()
                .zip(ds.lower().iter().zip(ds.upper()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect();
            yr.assign(&ndarray::ArrayView1::from(&problem.evaluate(&clamped)?));
        }
        let rows: Vec<Vec<f64>> = y.rows().into_iter().map(|r| r.to_vec()).collect();
        let ind = indicators(ds, &rows, seed)?;
        table.y = Some(y);
        write_text(&designs, &table.to_csv(ds.n_obj()))?;

        let report = self.report_path(seed, method);
        let header = ["task", "method", "seed", "metric", "value"].map(String::from);
        let label = method.label();
        let rows = [
            ("hypervolume", Some(ind.hypervolume)),
            ("delta_spread", ind.delta_spread),
        ]
        .into_iter()
        .map(|(metric, v)| {
            vec![
                self.cfg.problem.clone(),
                label.clone(),
                seed.to_string(),
                metric.to_string(),
                opt_value(v),
            ]
        });
        write_text(&report, &csv_text(&header, rows))?;
        for p in [&designs, &report] {
            Manifest::new("evaluate", p, &self.cfg, Some(seed))
                .detail("method", &label)
                .write_next_to(p)?;
        }
        Ok(ind)
    }

    /// Trains whatever is missing, then samples and evaluates `method` for
    /// every seed.
    pub fn run_method(&self, method: &Method) -> Result<IndicatorReport> {
        self.ensure_dataset()?;
        let seeds = self.for_each_seed(|seed| {
            self.train_denoiser(seed)?;
            if let Method::Guided { criterion, .. } = method {
                self.train_classifier(seed, *criterion)?;
            }
            self.sample(seed, method)?;
            self.evaluate(seed, method)
        })?;
        Ok(IndicatorReport {
            task: self.cfg.problem.clone(),
            method: method.label(),
            seeds,
        })
    }

    /// Runs a sweep over guidance weights or diversity criteria and writes
    /// `ablate-<sweep>.csv` with one row per (setting, seed).
    pub fn ablate(&self, sweep: Sweep) -> Result<(PathBuf, Vec<AblationRow>)> {
        self.ensure_dataset()?;
        let mode = self.cfg.classifier.gradient_mode;
        let settings: Vec<(f64, DiversityCriterion)> = match sweep {
            Sweep::Weight => WEIGHT_SWEEP.iter().map(|&w| (w, self.cfg.classifier.criterion)).collect(),
            Sweep::Criterion => CRITERION_SWEEP.iter().map(|&c| (self.cfg.guidance.weight, c)).collect(),
        };
        let per_seed = self.for_each_seed(|seed| {
            self.train_denoiser(seed)?;
            let mut rows = Vec::new();
            for &(weight, criterion) in &settings {
                self.train_classifier(seed, criterion)?;
                let method = Method::Guided { weight, criterion, mode };
                self.sample(seed, &method)?;
                let indicators = self.evaluate(seed, &method)?;
                rows.push(AblationRow { seed, weight, criterion, indicators });
            }
            Ok(rows)
        })?;
        let mut rows: Vec<AblationRow> = per_seed.into_iter().flatten().collect();
        // Setting-major order, seeds in configured order within a setting.
        rows.sort_by_key(|r| settings.iter().position(|&(w, c)| w == r.weight && c == r.criterion));
        let name = match sweep {
            Sweep::Weight => "ablate-w.csv",
            Sweep::Criterion => "ablate-criterion.csv",
        };
        let path = self.cfg.problem_dir().join(name);
        let header = ["task", "seed", "w", "criterion", "hypervolume", "delta_spread"].map(String::from);
        let text = csv_text(
            &header,
            rows.iter().map(|r| {
                vec![
                    self.cfg.problem.clone(),
                    r.seed.to_string(),
                    r.weight.to_string(),
                    r.criterion.to_string(),
                    format_value(r.indicators.hypervolume),
                    opt_value(r.indicators.delta_spread),
                ]
            }),
        );
        write_text(&path, &text)?;
        Manifest::new("ablate", &path, &self.cfg, None)
            .detail("sweep", name.trim_start_matches("ablate-").trim_end_matches(".csv"))
            .detail("rows", rows.len())
            .write_next_to(&path)?;
        Ok((path, rows))
    }

    /// Records guided trajectories every `every` steps, evaluates each
    /// state, and summarizes the mean distance to the true front.
    pub fn probe(&self, seed: u64, every: usize) -> Result<(PathBuf, PathBuf)> {
        let ds = self.dataset()?;
        let problem = ds
            .problem()
            .ok_or_else(|| anyhow!("probe needs a dataset with a known problem"))?;
        let sched = self.cfg.schedule()?;
        let criterion = self.cfg.classifier.criterion;
        let denoiser = self.load_trained(&self.denoiser_path(seed), "denoiser_hash", &self.cfg.denoiser_hash())?;
        let classifier = self.load_trained(
            &self.classifier_path(seed, criterion),
            "classifier_hash",
            &self.cfg.classifier_hash(criterion),
        )?;
        let gcfg = GuidanceConfig {
            weight: self.cfg.guidance.weight,
            mode: self.cfg.classifier.gradient_mode,
            n: self.cfg.guidance.budget,
            seed,
            max_grad_norm: self.cfg.guidance.max_grad_norm,
        };
        let reference = select_reference(ds)?;
        let (_, records) = sample_trajectory_probe(&denoiser, &classifier, &sched, &reference, &gcfg, every)?;
        let stats = ds.objective_stats();
        let front: Vec<Vec<f64>> = problem
            .pareto_front_sample(1000)
            .iter()
            .map(|y| stats.normalize(y))
            .collect::<pgd_core::Result<_>>()?;

        let (d, m) = (ds.dim(), ds.n_obj());
        let header: Vec<String> = ["step", "chain"]
            .into_iter()
            .map(String::from)
            .chain((0..d).map(|i| format!("x{i}")))
            .chain((0..m).map(|i| format!("y{i}")))
            .collect();
        let mut rows = Vec::with_capacity(records.len());
        let mut by_step: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
        for r in &records {
            let x = ds.denormalize_design(&r.x);
            let y = problem.evaluate(&x)?;
            by_step.entry(r.step).or_default().push(stats.normalize(&y)?);
            rows.push(
                [r.step.to_string(), r.chain.to_string()]
                    .into_iter()
                    .chain(x.iter().chain(&y).map(|&v| format_value(v)))
                    .collect(),
            );
        }
        let trajectory = self.seed_dir(seed).join("probe-trajectory.csv");
        write_text(&trajectory, &csv_text(&header, rows))?;
        let summary = self.seed_dir(seed).join("probe-summary.csv");
        let header = ["step", "chains", "mean_front_distance"].map(String::from);
        let rows = by_step.iter().rev().map(|(step, pts)| {
            vec![
                step.to_string(),
                pts.len().to_string(),
                format_value(mean_front_distance(pts, &front)),
            ]
        });
        write_text(&summary, &csv_text(&header, rows))?;
        for p in [&trajectory, &summary] {
            Manifest::new("probe", p, &self.cfg, Some(seed))
                .detail("every", every)
                .write_next_to(p)?;
        }
        Ok((trajectory, summary))
    }
}

/// Collects every `report-*.csv` under `out_dir` into per-method reports.
pub fn collect_reports(out_dir: &Path) -> Result<Vec<IndicatorReport>> {
    let mut files = Vec::new();
    let problems = std::fs::read_dir(out_dir).with_context(|| format!("cannot read {}", out_dir.display()))?;
    for problem in problems {
        let problem = problem?.path();
        if !problem.is_dir() {
            continue;
        }
        for seed_dir in std::fs::read_dir(&problem)? {
            let seed_dir = seed_dir?.path();
            if !seed_dir.is_dir() {
                continue;
            }
            for f in std::fs::read_dir(&seed_dir)? {
                let f = f?.path();
                let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                if name.starts_with("report-") && name.ends_with(".csv") {
                    files.push(f);
                }
            }
        }
    }
    files.sort();
    let mut grouped: BTreeMap<(String, String), BTreeMap<u64, (Option<f64>, Option<f64>)>> = BTreeMap::new();
    for path in &files {
        let mut reader = csv::Reader::from_path(path)?;
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            if record.len() != 5 {
                bail!("{}:{line}: expected 5 fields", path.display());
            }
            let seed: u64 = record[2]
                .parse()
                .map_err(|_| anyhow!("{}:{line}: bad seed", path.display()))?;
            let value = match &record[4] {
                "NA" => None,
                v => Some(parse_f64(v, path, line)?),
            };
            let entry = grouped
                .entry((record[0].to_string(), record[1].to_string()))
                .or_default()
                .entry(seed)
                .or_default();
            match &record[3] {
                "hypervolume" => entry.0 = value,
                "delta_spread" => entry.1 = value,
                other => bail!("{}:{line}: unknown metric `{other}`", path.display()),
            }
        }
    }
    grouped
        .into_iter()
        .map(|((task, method), seeds)| {
            let seeds = seeds
                .into_iter()
                .map(|(seed, (hv, spread))| {
                    Ok(SeedIndicators {
                        seed,
                        hypervolume: hv.ok_or_else(|| anyhow!("{task}/{method} seed {seed} has no hypervolume"))?,
                        delta_spread: spread,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(IndicatorReport { task, method, seeds })
        })
        .collect()
}

/// Writes `summary.csv` (mean and sample std per task, method and metric)
/// and, with at least two methods, `ranks.csv`.
pub fn write_report(out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let reports = collect_reports(out_dir)?;
    if reports.is_empty() {
        bail!("no report-*.csv files under {}; run `pgd evaluate` first", out_dir.display());
    }
    let mut summaries = Vec::new();
    for r in &reports {
        for (metric, s) in [("hypervolume", r.hypervolume()), ("delta_spread", r.delta_spread())] {
            if let Some(summary) = s {
                summaries.push(SummaryRow {
                    task: r.task.clone(),
                    method: r.method.clone(),
                    metric,
                    summary,
                });
            }
        }
    }
    let header = ["task", "method", "metric", "mean", "std", "count"].map(String::from);
    let text = csv_text(
        &header,
        summaries.iter().map(|s| {
            vec![
                s.task.clone(),
                s.method.clone(),
                s.metric.to_string(),
                format_value(s.summary.mean),
                format_value(s.summary.std),
                s.summary.count.to_string(),
            ]
        }),
    );
    write_text(&out_dir.join("summary.csv"), &text)?;

    let methods: std::collections::BTreeSet<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    if methods.len() >= 2 {
        let table = aggregate(&reports)?;
        let header = ["method", "mean_hypervolume_rank", "mean_spread_rank"].map(String::from);
        let text = csv_text(
            &header,
            table.methods.iter().enumerate().map(|(i, m)| {
                vec![
                    m.clone(),
                    format_value(table.mean_hypervolume_rank[i]),
                    format_value(table.mean_spread_rank[i]),
                ]
            }),
        );
        write_text(&out_dir.join("ranks.csv"), &text)?;
    } else {
        let stale = out_dir.join("ranks.csv");
        if stale.exists() {
            std::fs::remove_file(&stale)?;
        }
        info!("one method only; skipping ranks.csv");
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_labels() {
        assert_eq!(Method::Unconditional.label(), "unconditional");
        let m = Method::Guided {
            weight: 10.0,
            criterion: DiversityCriterion::Crowding,
            mode: GradientMode::LogProb,
        };
        assert_eq!(m.label(), "pgd-w10-crowding");
        let m = Method::Guided {
            weight: 0.5,
            criterion: DiversityCriterion::HypervolumeImprovement,
            mode: GradientMode::RawProb,
        };
        assert_eq!(m.label(), "pgd-w0.5-hypervolume-raw");
    }

    #[test]
    fn sweep_parses() {
        assert_eq!("w".parse::<Sweep>().unwrap(), Sweep::Weight);
        assert_eq!("criterion".parse::<Sweep>().unwrap(), Sweep::Criterion);
        assert!("lr".parse::<Sweep>().is_err());
    }

    #[test]
    fn design_tables_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("designs-x.csv");
        let table = DesignTable {
            x: ndarray::array![[0.1, -2.5], [1.0 / 3.0, 7.0]],
            y: None,
            chains: vec![4, 9],
            seed: 3,
        };
        let text = table.to_csv(2);
        assert!(text.starts_with("x0,x1,y0,y1,chain,seed\n"));
        assert!(text.contains(",NA,NA,4,3\n"));
        write_text(&path, &text).unwrap();
        let back = DesignTable::read(&path, 2, 2).unwrap();
        assert_eq!(back.x, table.x);
        assert_eq!(back.chains, table.chains);
        assert_eq!(back.seed, 3);
        assert!(DesignTable::read(&path, 3, 2).is_err());
    }

    #[test]
    fn missing_designs_name_the_path() {
        let err = DesignTable::read(Path::new("/nonexistent/designs.csv"), 2, 2).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/designs.csv"));
    }

    #[test]
    fn dataset_front_has_positive_volume() {
        let p = Problem::by_name("zdt1").unwrap();
        let ds = generate_dataset(&p, 300, 2).unwrap();
        let ind = dataset_indicators(&ds).unwrap();
        assert!(ind.hypervolume > 0.0);
        assert!(ind.hypervolume <= 2.1f64.powi(2) + 1e-12);
    }
}
