//! Time-conditioned pairwise preference classifier.
//!
//! The network sees the concatenation `(x_t, x̂_t)` of two designs noised to
//! the same timestep and emits one logit for "the first design is preferred".

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dominance::dominates_unchecked;
use super::labels::{DiversityCriterion, PairLabeler, PreferencePair};
use crate::diffusion::{forward_noise_batch, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Architecture, Mlp, OptimizerState, DEFAULT_TIME_EMBED_DIM};
use crate::rng::{stream, StreamTag};

/// Which quantity's input gradient steers sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// `∇ log σ(logit)`
    LogProb,
    /// `∇ σ(logit)`
    RawProb,
}

impl GradientMode {
    pub fn name(self) -> &'static str {
        match self {
            GradientMode::LogProb => "log-prob",
            GradientMode::RawProb => "raw-prob",
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-prob" | "log" => Ok(GradientMode::LogProb),
            "raw-prob" | "raw" => Ok(GradientMode::RawProb),
            _ => Err(Error::Config(format!("unknown gradient mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceConfig {
    /// Hidden widths; empty means `[2d, 2d, 512]` for designs of width `d`.
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub criterion: DiversityCriterion,
    /// Pairs drawn per epoch; `None` means one per training row.
    #[serde(default)]
    pub pairs_per_epoch: Option<usize>,
    /// Fixed held-out pairs used for the validation loss and accuracy.
    pub validation_pairs: usize,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            time_embed_dim: DEFAULT_TIME_EMBED_DIM,
            epochs: 500,
            learning_rate: 1e-5,
            batch_size: 256,
            criterion: DiversityCriterion::Crowding,
            pairs_per_epoch: None,
            validation_pairs: 2048,
        }
    }
}

impl PreferenceConfig {
    pub fn architecture(&self, dim: usize) -> Architecture {
        let hidden = if self.hidden.is_empty() {
            vec![2 * dim, 2 * dim, 512]
        } else {
            self.hidden.clone()
        };
        Architecture {
            input_dim: 2 * dim,
            hidden,
            output_dim: 1,
            layer_norm: true,
            time_embed_dim: self.time_embed_dim,
        }
    }
}

/// Designs (normalized) with their objective vectors.
#[derive(Debug, Clone, Copy)]
pub struct LabeledDesigns<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub pairs: usize,
    pub valid_loss: f64,
    /// Accuracy on held-out strict-dominance pairs, clean inputs at t = 1.
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: Mlp,
    pub best_epoch: usize,
    pub log: Vec<PreferenceEpoch>,
}

fn rows<'a>(y: &ArrayView2<'a, f64>) -> Vec<Vec<f64>> {
    y.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn pair_inputs(x: ArrayView2<f64>, r: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.dim() != r.dim() {
        return Err(Error::Shape(format!(
            "pair halves differ: {:?} vs {:?}",
            x.dim(),
            r.dim()
        )));
    }
    concatenate(Axis(1), &[x.view(), r.view()])
        .map(|a| a.as_standard_layout().into_owned())
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Logits of `x[i] ≺ r[i]` at timesteps `t[i]`.
pub fn preference_logits(
    model: &Mlp,
    x: ArrayView2<f64>,
    r: ArrayView2<f64>,
    t: &[usize],
) -> Result<Vec<f64>> {
    let input = pair_inputs(x, r)?;
    Ok(model.predict(input.view(), t)?.column(0).to_vec())
}

/// Gradient with respect to the first design of `log σ(logit)` or
/// `σ(logit)`, every row at timestep `t`.
pub fn preference_score_grad(
    model: &Mlp,
    x: ArrayView2<f64>,
    r: ArrayView2<f64>,
    t: usize,
    mode: GradientMode,
) -> Result<Array2<f64>> {
    let dim = x.ncols();
    let input = pair_inputs(x, r)?;
    let ts = vec![t; x.nrows()];
    let (logits, cache) = model.forward(input.view(), &ts)?;
    let upstream = logits.mapv(|z| match mode {
        GradientMode::LogProb => sigmoid(-z),
        GradientMode::RawProb => sigmoid(z) * sigmoid(-z),
    });
    let grad = model.input_gradient(&cache, upstream.view())?;
    Ok(grad.slice(s![.., ..dim]).to_owned())
}

/// Mean binary cross-entropy with logits, and its gradient.
fn bce(logits: &Array2<f64>, labels: &[f64]) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for ((g, &z), &y) in grad.iter_mut().zip(logits.iter()).zip(labels) {
        loss += softplus(z) - y * z;
        *g = (sigmoid(z) - y) / n;
    }
    (loss / n, grad)
}

fn noised_pairs<R: Rng + ?Sized>(
    x: &ArrayView2<f64>,
    pairs: &[PreferencePair],
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<(Array2<f64>, Vec<usize>, Vec<f64>)> {
    let a: Vec<usize> = pairs.iter().map(|p| p.a).collect();
    let b: Vec<usize> = pairs.iter().map(|p| p.b).collect();
    let t: Vec<usize> = pairs.iter().map(|_| rng.gen_range(1..=sched.steps())).collect();
    let dim = x.ncols();
    let noise_a = Array2::from_shape_simple_fn((pairs.len(), dim), || rng.sample(StandardNormal));
    let noise_b = Array2::from_shape_simple_fn((pairs.len(), dim), || rng.sample(StandardNormal));
    let xa = forward_noise_batch(x.select(Axis(0), &a).view(), &t, noise_a.view(), sched)?;
    let xb = forward_noise_batch(x.select(Axis(0), &b).view(), &t, noise_b.view(), sched)?;
    let labels = pairs.iter().map(|p| f64::from(p.label)).collect();
    Ok((pair_inputs(xa.view(), xb.view())?, t, labels))
}

fn draw_pairs<R: Rng + ?Sized>(
    labeler: &PairLabeler,
    n_points: usize,
    draws: usize,
    rng: &mut R,
) -> Vec<PreferencePair> {
    (0..draws)
        .filter_map(|_| {
            let a = rng.gen_range(0..n_points);
            let b = rng.gen_range(0..n_points - 1);
            let b = if b >= a { b + 1 } else { b };
            labeler.label(a, b)
        })
        .collect()
}

/// Held-out ordered pairs where one design strictly dominates the other.
fn strict_dominance_pairs<R: Rng + ?Sized>(
    y: &[Vec<f64>],
    wanted: usize,
    rng: &mut R,
) -> Vec<PreferencePair> {
    let n = y.len();
    let mut out = Vec::with_capacity(wanted);
    if n < 2 {
        return out;
    }
    let mut attempts = 0;
    while out.len() < wanted && attempts < 50 * wanted {
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let label = if dominates_unchecked(&y[a], &y[b]) {
            1
        } else if dominates_unchecked(&y[b], &y[a]) {
            0
        } else {
            continue;
        };
        out.push(PreferencePair {
            a,
            b,
            label,
            provenance: super::labels::Provenance::StrictDominance,
        });
    }
    out
}

/// Fraction of `pairs` whose predicted preference at t = 1 on clean inputs
/// matches the label.
pub fn pair_accuracy(model: &Mlp, x: ArrayView2<f64>, pairs: &[PreferencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let a: Vec<usize> = pairs.iter().map(|p| p.a).collect();
    let b: Vec<usize> = pairs.iter().map(|p| p.b).collect();
    let logits = preference_logits(
        model,
        x.select(Axis(0), &a).view(),
        x.select(Axis(0), &b).view(),
        &vec![1; pairs.len()],
    )?;
    let correct = logits
        .iter()
        .zip(pairs)
        .filter(|(&z, p)| (z > 0.0) == (p.label == 1))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Strict-dominance accuracy on `designs` at t = 1, over up to `pairs`
/// random ordered pairs drawn with `seed`.
pub fn strict_dominance_accuracy(
    model: &Mlp,
    designs: LabeledDesigns<'_>,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let y = rows(&designs.y);
    let mut rng = stream(seed, StreamTag::Probe, 0);
    let held_out = strict_dominance_pairs(&y, pairs, &mut rng);
    pair_accuracy(model, designs.x, &held_out)
}

/// Trains the classifier with Adam on freshly labeled, noised pairs each
/// epoch (`|train|` draws with replacement; unlabeled draws are skipped).
/// Labels come from fronts over the training objectives; the returned
/// parameters are those with the lowest held-out loss.
pub fn train_preference(
    train: LabeledDesigns<'_>,
    valid: LabeledDesigns<'_>,
    sched: &DiffusionSchedule,
    cfg: &PreferenceConfig,
    hv_reference: &[f64],
    seed: u64,
) -> Result<TrainedClassifier> {
    let dim = train.x.ncols();
    if train.x.nrows() != train.y.nrows() || valid.x.nrows() != valid.y.nrows() {
        return Err(Error::Shape("designs and objectives differ in length".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let train_y = rows(&train.y);
    let labeler = PairLabeler::new(&train_y, cfg.criterion, hv_reference)?;
    if train.x.nrows() < 2 || !labeler.has_labelable_pairs() {
        return Err(Error::Config(
            "training data yields no labeled preference pairs".into(),
        ));
    }

    let mut init = stream(seed, StreamTag::Init, 1);
    let mut model = Mlp::new(cfg.architecture(dim), &mut init)?;

    // Fixed held-out draws: same-rule pairs on validation fronts for the
    // loss, strict-dominance pairs for the accuracy.
    let mut vrng = stream(seed, StreamTag::PreferenceValidation, 0);
    let valid_y = rows(&valid.y);
    let (valid_inputs, valid_t, valid_labels) = if valid.x.nrows() >= 2 {
        let vlabeler = PairLabeler::new(&valid_y, cfg.criterion, hv_reference)?;
        let pairs = draw_pairs(&vlabeler, valid.x.nrows(), cfg.validation_pairs, &mut vrng);
        noised_pairs(&valid.x, &pairs, sched, &mut vrng)?
    } else {
        (Array2::zeros((0, 2 * dim)), Vec::new(), Vec::new())
    };
    let accuracy_pairs = strict_dominance_pairs(&valid_y, cfg.validation_pairs, &mut vrng);

    let mut opt = OptimizerState::new(AdamConfig::adam(cfg.learning_rate), &model.tensors());
    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let n = train.x.nrows();

    for epoch in 0..cfg.epochs {
        let mut rng = stream(seed, StreamTag::PreferenceTraining, epoch as u64);
        let pairs = draw_pairs(&labeler, n, cfg.pairs_per_epoch.unwrap_or(n), &mut rng);
        let mut total = 0.0;
        for chunk in pairs.chunks(cfg.batch_size) {
            let (inputs, t, labels) = noised_pairs(&train.x, chunk, sched, &mut rng)?;
            let (logits, cache) = model.forward(inputs.view(), &t)?;
            let (loss, grad) = bce(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "classifier loss at epoch {epoch} is {loss}"
                )));
            }
            total += loss * chunk.len() as f64;
            let grads = model.backward(&cache, grad.view())?;
            opt.step(model.params_mut(), &grads.tensors())?;
        }
        let train_loss = total / pairs.len().max(1) as f64;
        let valid_loss = if valid_labels.is_empty() {
            train_loss
        } else {
            let logits = model.predict(valid_inputs.view(), &valid_t)?;
            bce(&logits, &valid_labels).0
        };
        let valid_accuracy = pair_accuracy(&model, valid.x, &accuracy_pairs)?;
        log::debug!(
            "classifier epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} acc {valid_accuracy:.3}"
        );
        log.push(PreferenceEpoch {
            epoch,
            train_loss,
            pairs: pairs.len(),
            valid_loss,
            valid_accuracy,
        });
        if best.as_ref().map_or(true, |(b, _, _)| valid_loss < *b) {
            best = Some((valid_loss, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.unwrap_or((f64::NAN, 0, model));
    Ok(TrainedClassifier {
        model,
        best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_classifier(dim: usize, seed: u64) -> Mlp {
        let cfg = PreferenceConfig {
            hidden: vec![6, 6, 8],
            time_embed_dim: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::new(cfg.architecture(dim), &mut rng).unwrap()
    }

    #[test]
    fn default_architecture_follows_input_width() {
        let a = PreferenceConfig::default().architecture(30);
        assert_eq!(a.input_dim, 60);
        assert_eq!(a.hidden, vec![60, 60, 512]);
        assert_eq!(a.output_dim, 1);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let mut m = small_classifier(3, 1);
        for p in m.params_mut() {
            p.fill(0.0);
        }
        let x = Array2::from_elem((2, 3), 0.3);
        let g = preference_score_grad(&m, x.view(), x.view(), 5, GradientMode::LogProb).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_mode_is_log_mode_scaled_by_probability() {
        let m = small_classifier(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_simple_fn((4, 3), || rng.gen_range(-1.0..1.0));
        let r = Array2::from_shape_simple_fn((4, 3), || rng.gen_range(-1.0..1.0));
        let log_g = preference_score_grad(&m, x.view(), r.view(), 7, GradientMode::LogProb).unwrap();
        let raw_g = preference_score_grad(&m, x.view(), r.view(), 7, GradientMode::RawProb).unwrap();
        let logits = preference_logits(&m, x.view(), r.view(), &[7; 4]).unwrap();
        for i in 0..4 {
            let p = sigmoid(logits[i]);
            for j in 0..3 {
                assert!((raw_g[[i, j]] - p * log_g[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn untrained_zero_output_loss_is_ln2() {
        let logits = Array2::zeros((5, 1));
        let (loss, _) = bce(&logits, &[1.0, 0.0, 1.0, 1.0, 0.0]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn stable_logistic_helpers() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn degenerate_training_set_is_rejected() {
        let x = Array2::zeros((2, 2));
        let y = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        let d = LabeledDesigns { x: x.view(), y: y.view() };
        let sched = DiffusionSchedule::linear(10, 1e-4, 0.02).unwrap();
        let cfg = PreferenceConfig { epochs: 1, ..Default::default() };
        assert!(matches!(
            train_preference(d, d, &sched, &cfg, &[1.1, 1.1], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gradient_mode_parsing() {
        assert_eq!("log-prob".parse::<GradientMode>().unwrap(), GradientMode::LogProb);
        assert_eq!("raw".parse::<GradientMode>().unwrap(), GradientMode::RawProb);
        assert!("other".parse::<GradientMode>().is_err());
    }
}
