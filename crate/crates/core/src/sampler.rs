//! Preference-guided reverse diffusion.
//!
//! Every chain starts from its own Gaussian draw and its own copy of the
//! reference design. At step `t` the denoiser's mean is shifted by
//! `w·β_t·s_p`, where `s_p` is the classifier's input gradient comparing the
//! current state against the reference; the reference then becomes the
//! state that was just denoised.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::benchmarks::OfflineDataset;
use crate::diffusion::{chain_stream, reverse_mean, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::preference::{preference_score_grad, GradientMode};

/// Largest share of chains allowed to diverge before a run fails.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub weight: f64,
    pub mode: GradientMode,
    /// Number of chains.
    pub n: usize,
    pub seed: u64,
    /// Optional per-chain clamp on `‖s_p‖`; off by default.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            weight: 10.0,
            mode: GradientMode::LogProb,
            n: 256,
            seed: 0,
            max_grad_norm: None,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::Config(format!("guidance weight {} must be finite and ≥ 0", self.weight)));
        }
        if self.n == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("gradient clamp {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Normalized coordinates of the most dominant design: front 0, then the
/// largest crowding distance, then the lowest index.
pub fn select_reference(dataset: &OfflineDataset) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot pick a reference from an empty dataset".into()));
    }
    let best = dataset.annotations().dominance_order()[0];
    Ok(dataset.x().row(best).to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    /// Final designs of the surviving chains, clamped to `[−1, 1]`.
    pub designs: Array2<f64>,
    /// Chain index of each row of `designs`.
    pub chain_ids: Vec<usize>,
    /// Chains dropped after a non-finite state.
    pub aborted: Vec<usize>,
    /// Largest `‖w·β_t·s_p‖` seen in any chain at any step.
    pub max_shift: f64,
}

/// One recorded state `x̃_step` of one chain, clamped to `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub chain: usize,
    pub x: Vec<f64>,
}

struct Guidance<'a> {
    classifier: &'a Mlp,
    reference: &'a [f64],
}

fn run_chains(
    denoiser: &Mlp,
    guidance: Option<Guidance<'_>>,
    sched: &DiffusionSchedule,
    cfg: &GuidanceConfig,
    record_every: Option<usize>,
) -> Result<(SampleOutput, Vec<TrajectoryRecord>)> {
    cfg.validate()?;
    let dim = denoiser.architecture().input_dim;
    let n = cfg.n;
    if let Some(g) = &guidance {
        if g.reference.len() != dim {
            return Err(Error::Shape(format!(
                "reference has {} variables, denoiser expects {dim}",
                g.reference.len()
            )));
        }
        if g.classifier.architecture().input_dim != 2 * dim {
            return Err(Error::Shape("classifier and denoiser widths disagree".into()));
        }
    }
    let mut rngs: Vec<_> = (0..n).map(|c| chain_stream(cfg.seed, c)).collect();
    let mut x = Array2::zeros((n, dim));
    for (mut row, rng) in x.rows_mut().into_iter().zip(rngs.iter_mut()) {
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    let mut reference = guidance.as_ref().map(|g| {
        let mut r = Array2::zeros((n, dim));
        let row = ndarray::ArrayView1::from(g.reference);
        r.rows_mut().into_iter().for_each(|mut x| x.assign(&row));
        r
    });
    let mut alive = vec![true; n];
    let mut max_shift = 0.0f64;
    let mut records = Vec::new();

    for t in (1..=sched.steps()).rev() {
        let mut mean = reverse_mean(denoiser, x.view(), t, sched)?;
        if let (Some(g), Some(r)) = (&guidance, reference.as_mut()) {
            let mut grad = preference_score_grad(g.classifier, x.view(), r.view(), t, cfg.mode)?;
            let scale = cfg.weight * sched.beta(t);
            for (c, mut s) in grad.rows_mut().into_iter().enumerate() {
                if !alive[c] {
                    continue;
                }
                let mut norm = s.dot(&s).sqrt();
                if let Some(limit) = cfg.max_grad_norm {
                    if norm > limit {
                        s.mapv_inplace(|v| v * limit / norm);
                        norm = limit;
                    }
                }
                max_shift = max_shift.max(scale * norm);
            }
            if cfg.weight != 0.0 {
                mean.scaled_add(scale, &grad);
            }
            r.assign(&x);
        }
        if t > 1 {
            let sigma = sched.beta(t).sqrt();
            for ((mut row, m), rng) in x.rows_mut().into_iter().zip(mean.rows()).zip(rngs.iter_mut()) {
                for (v, &mu) in row.iter_mut().zip(m.iter()) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = mu + sigma * z;
                }
            }
        } else {
            x = mean;
        }
        // Diverged chains are parked at the origin so they cannot poison
        // the batch; their later values are ignored.
        for (c, mut row) in x.rows_mut().into_iter().enumerate() {
            if alive[c] && row.iter().any(|v| !v.is_finite()) {
                log::warn!("chain {c} diverged at t = {t}");
                alive[c] = false;
            }
            if !alive[c] {
                row.fill(0.0);
            }
        }
        let step = t - 1;
        if let Some(k) = record_every {
            if step % k == 0 {
                for (c, row) in x.rows().into_iter().enumerate().filter(|(c, _)| alive[*c]) {
                    records.push(TrajectoryRecord {
                        step,
                        chain: c,
                        x: row.iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
                    });
                }
            }
        }
    }

    let aborted: Vec<usize> = (0..n).filter(|&c| !alive[c]).collect();
    if aborted.len() as f64 > MAX_ABORT_FRACTION * n as f64 {
        return Err(Error::NonFinite(format!(
            "{} of {n} chains diverged",
            aborted.len()
        )));
    }
    let chain_ids: Vec<usize> = (0..n).filter(|&c| alive[c]).collect();
    let mut designs = x.select(Axis(0), &chain_ids);
    designs.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    Ok((
        SampleOutput {
            designs,
            chain_ids,
            aborted,
            max_shift,
        },
        records,
    ))
}

/// Guided ancestral sampling of `cfg.n` chains. With `w = 0` the result
/// is bit-identical to unconditional sampling under the same seed.
pub fn guided_sample(
    denoiser: &Mlp,
    classifier: &Mlp,
    sched: &DiffusionSchedule,
    reference: &[f64],
    cfg: &GuidanceConfig,
) -> Result<SampleOutput> {
    let guidance = Guidance { classifier, reference };
    Ok(run_chains(denoiser, Some(guidance), sched, cfg, None)?.0)
}

/// Sampling without a classifier; `cfg.weight` and `cfg.mode` are unused.
pub fn unguided_sample(denoiser: &Mlp, sched: &DiffusionSchedule, cfg: &GuidanceConfig) -> Result<SampleOutput> {
    Ok(run_chains(denoiser, None, sched, cfg, None)?.0)
}

/// [`guided_sample`] that also records every chain's clamped state
/// `x̃_s` after each step with `s % every == 0` (so `every = T` keeps only
/// the final designs).
pub fn sample_trajectory_probe(
    denoiser: &Mlp,
    classifier: &Mlp,
    sched: &DiffusionSchedule,
    reference: &[f64],
    cfg: &GuidanceConfig,
    every: usize,
) -> Result<(SampleOutput, Vec<TrajectoryRecord>)> {
    if every == 0 {
        return Err(Error::Config("recording stride must be positive".into()));
    }
    let guidance = Guidance { classifier, reference };
    run_chains(denoiser, Some(guidance), sched, cfg, Some(every))
}

/// Mean Euclidean distance from each point to its nearest neighbor in
/// `front`.
pub fn mean_front_distance<P: AsRef<[f64]>, F: AsRef<[f64]>>(points: &[P], front: &[F]) -> f64 {
    if points.is_empty() || front.is_empty() {
        return f64::NAN;
    }
    let total: f64 = points
        .iter()
        .map(|p| {
            front
                .iter()
                .map(|f| {
                    p.as_ref()
                        .iter()
                        .zip(f.as_ref())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / points.len() as f64
}
