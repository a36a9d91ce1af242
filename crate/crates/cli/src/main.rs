use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pgd_cli::config::ExperimentConfig;
use pgd_cli::pipeline::{write_report, HashMismatch, MissingArtifact};
use pgd_cli::{Method, Pipeline, Sweep};
use pgd_core::preference::{DiversityCriterion, GradientMode};

#[derive(Parser)]
#[command(name = "pgd", version, about = "Preference-guided diffusion for offline multi-objective optimization")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Field overrides. A `--config` file is applied after these, so its
/// values win.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML experiment config (overrides flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the desk-scale preset (T = 200) instead of the defaults.
    #[arg(long, global = true)]
    fast: bool,
    #[arg(long, global = true)]
    problem: Option<String>,
    /// Offline dataset size.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    data_seed: Option<u64>,
    /// Comma-separated run seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long = "out", global = true)]
    out_dir: Option<PathBuf>,
    /// Diffusion steps T.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    beta_start: Option<f64>,
    #[arg(long, global = true)]
    beta_end: Option<f64>,
    #[arg(long, global = true)]
    denoiser_epochs: Option<usize>,
    #[arg(long, global = true)]
    denoiser_lr: Option<f64>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    #[arg(long, global = true)]
    denoiser_batch: Option<usize>,
    #[arg(long, global = true)]
    classifier_epochs: Option<usize>,
    #[arg(long, global = true)]
    classifier_lr: Option<f64>,
    #[arg(long, global = true)]
    classifier_batch: Option<usize>,
    #[arg(long, global = true)]
    pairs_per_epoch: Option<usize>,
    /// crowding, hypervolume or none.
    #[arg(long, global = true)]
    criterion: Option<DiversityCriterion>,
    #[arg(long, global = true)]
    prune_fraction: Option<f64>,
    /// log-prob or raw-prob.
    #[arg(long, global = true)]
    gradient_mode: Option<GradientMode>,
    /// Guidance weight.
    #[arg(long = "w", global = true)]
    weight: Option<f64>,
    /// Designs per run.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    max_grad_norm: Option<f64>,
    /// Run seeds concurrently.
    #[arg(long, global = true)]
    parallel_seeds: bool,
    /// Use checkpoints even when their configuration hash differs.
    #[arg(long, global = true)]
    allow_hash_mismatch: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import) the offline dataset.
    GenData {
        /// Import an external dataset CSV instead of generating one.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Train the denoiser and the configured classifier for every seed.
    Train,
    /// Sample designs from stored checkpoints.
    Sample {
        /// Sample without guidance and without a classifier.
        #[arg(long)]
        unconditional: bool,
    },
    /// Evaluate sampled designs and write indicator rows.
    Evaluate {
        #[arg(long)]
        unconditional: bool,
    },
    /// Sweep guidance weights or diversity criteria across seeds.
    Ablate {
        /// `w` or `criterion`.
        #[arg(long)]
        sweep: Sweep,
    },
    /// Summarize every evaluated run under the output directory.
    Report,
    /// Record guided trajectories and their distance to the true front.
    Probe {
        /// Record every this many steps.
        #[arg(long, default_value_t = 10)]
        every: usize,
        /// Seed to probe (defaults to the first configured seed).
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = if self.fast {
            ExperimentConfig::fast()
        } else {
            ExperimentConfig::default()
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(self.problem => problem);
        set!(self.n => n);
        set!(self.data_seed => data_seed);
        set!(self.seeds => seeds);
        set!(self.out_dir => out_dir);
        set!(self.steps => diffusion.steps);
        set!(self.beta_start => diffusion.beta_start);
        set!(self.beta_end => diffusion.beta_end);
        set!(self.denoiser_epochs => diffusion.epochs);
        set!(self.denoiser_lr => diffusion.learning_rate);
        set!(self.weight_decay => diffusion.weight_decay);
        set!(self.denoiser_batch => diffusion.batch_size);
        set!(self.classifier_epochs => classifier.epochs);
        set!(self.classifier_lr => classifier.learning_rate);
        set!(self.classifier_batch => classifier.batch_size);
        if self.pairs_per_epoch.is_some() {
            cfg.classifier.pairs_per_epoch = self.pairs_per_epoch;
        }
        set!(self.criterion => classifier.criterion);
        set!(self.prune_fraction => classifier.prune_fraction);
        set!(self.gradient_mode => classifier.gradient_mode);
        set!(self.weight => guidance.weight);
        set!(self.budget => guidance.budget);
        if self.max_grad_norm.is_some() {
            cfg.guidance.max_grad_norm = self.max_grad_norm;
        }
        match &self.config {
            Some(path) => cfg.overlay_file(path),
            None => Ok(cfg),
        }
    }
}

fn method(pipeline: &Pipeline, unconditional: bool) -> Method {
    if unconditional {
        Method::Unconditional
    } else {
        pipeline.configured_method()
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.resolve()?;
    let mut pipeline = Pipeline::new(cfg)?;
    pipeline.allow_hash_mismatch = cli.config.allow_hash_mismatch;
    pipeline.parallel_seeds = cli.config.parallel_seeds;
    let cfg = pipeline.config().clone();
    match cli.command {
        Command::GenData { from } => {
            let path = match from {
                Some(src) => pipeline.import_data(&src)?,
                None => pipeline.gen_data()?,
            };
            println!("{}", path.display());
        }
        Command::Train => pipeline.train()?,
        Command::Sample { unconditional } => {
            let m = method(&pipeline, unconditional);
            pipeline.for_each_seed(|seed| {
                let out = pipeline.sample(seed, &m)?;
                println!("{}\t{} designs", pipeline.designs_path(seed, &m).display(), out.designs.nrows());
                Ok(())
            })?;
        }
        Command::Evaluate { unconditional } => {
            let m = method(&pipeline, unconditional);
            let results = pipeline.for_each_seed(|seed| pipeline.evaluate(seed, &m))?;
            for r in results {
                let spread = r.delta_spread.map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
                println!("{}\t{}\tseed {}\thv {:.4}\tspread {spread}", cfg.problem, m.label(), r.seed, r.hypervolume);
            }
        }
        Command::Ablate { sweep } => {
            let (path, rows) = pipeline.ablate(sweep)?;
            println!("{}\t{} rows", path.display(), rows.len());
        }
        Command::Report => {
            for s in write_report(&cfg.out_dir)? {
                println!(
                    "{}\t{}\t{}\t{:.4} ± {:.4} (n={})",
                    s.task, s.method, s.metric, s.summary.mean, s.summary.std, s.summary.count
                );
            }
        }
        Command::Probe { every, seed } => {
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let (trajectory, summary) = pipeline.probe(seed, every)?;
            println!("{}\n{}", trajectory.display(), summary.display());
        }
    }
    Ok(())
}

/// Stable category for the machine-readable error line.
fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<HashMismatch>().is_some() {
        return "hash-mismatch";
    }
    if err.downcast_ref::<MissingArtifact>().is_some() {
        return "missing-artifact";
    }
    if let Some(e) = err.downcast_ref::<pgd_core::Error>() {
        return match e {
            pgd_core::Error::Shape(_) => "shape",
            pgd_core::Error::Config(_) => "config",
            pgd_core::Error::Range(_) => "range",
            pgd_core::Error::Domain(_) => "domain",
            pgd_core::Error::NonFinite(_) => "non-finite",
            pgd_core::Error::Parse { .. } => "parse",
            pgd_core::Error::Unsupported(_) => "unsupported",
            pgd_core::Error::Checkpoint(_) => "checkpoint",
            pgd_core::Error::Io { .. } => "io",
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "error"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({
                "error": error_kind(&err),
                "message": format!("{err:#}"),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
