//! DDPM machinery: linear variance schedule, closed-form forward noising,
//! ε-prediction training and the reverse-step mean.
//!
//! Timesteps are 1-based throughout (`1..=T`).

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Architecture, Mlp, OptimizerState, DEFAULT_TIME_EMBED_DIM};
use crate::rng::{stream, StreamTag};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// `β_t` interpolated linearly from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("need at least 2 timesteps, got {steps}")));
        }
        if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let span = (steps - 1) as f64;
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if i + 1 == steps {
                    beta_end
                } else {
                    beta_start + (i as f64 / span) * (beta_end - beta_start)
                }
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Number of timesteps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Range(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    noise: &[f64],
    sched: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    sched.check_timestep(t)?;
    if x0.len() != noise.len() {
        return Err(Error::Shape(format!(
            "design length {} vs noise length {}",
            x0.len(),
            noise.len()
        )));
    }
    let (a, b) = noise_coefficients(sched, t);
    Ok(x0.iter().zip(noise).map(|(x, e)| a * x + b * e).collect())
}

fn noise_coefficients(sched: &DiffusionSchedule, t: usize) -> (f64, f64) {
    let ab = sched.alpha_bar(t);
    (ab.sqrt(), (1.0 - ab).sqrt())
}

/// Row-wise [`forward_noise`]: row `i` is noised to timestep `t[i]`.
pub fn forward_noise_batch(
    x0: ArrayView2<f64>,
    t: &[usize],
    noise: ArrayView2<f64>,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    if x0.dim() != noise.dim() || t.len() != x0.nrows() {
        return Err(Error::Shape("batch noising shapes disagree".into()));
    }
    let mut out = x0.to_owned();
    for ((mut row, e), &ti) in out.rows_mut().into_iter().zip(noise.rows()).zip(t) {
        sched.check_timestep(ti)?;
        let (a, b) = noise_coefficients(sched, ti);
        row.zip_mut_with(&e, |x, &e| *x = a * *x + b * e);
    }
    Ok(out)
}

/// `μ = (x_t − ((1−α_t)/√(1−ᾱ_t))·ε̂) / √α_t` for every row of `x_t`,
/// given the predicted noise `eps`.
pub fn reverse_mean_from_eps(
    x_t: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    sched.check_timestep(t)?;
    if x_t.dim() != eps.dim() {
        return Err(Error::Shape("x_t and predicted noise differ in shape".into()));
    }
    let alpha = sched.alpha(t);
    let coef = (1.0 - alpha) / (1.0 - sched.alpha_bar(t)).sqrt();
    let scale = 1.0 / alpha.sqrt();
    let mut out = x_t.to_owned();
    out.zip_mut_with(&eps, |x, &e| *x = scale * (*x - coef * e));
    Ok(out)
}

/// Reverse-step mean under the denoiser `model`.
pub fn reverse_mean(
    model: &Mlp,
    x_t: ArrayView2<f64>,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    sched.check_timestep(t)?;
    let ts = vec![t; x_t.nrows()];
    let eps = model.predict(x_t, &ts)?;
    reverse_mean_from_eps(x_t, eps.view(), t, sched)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512],
            time_embed_dim: DEFAULT_TIME_EMBED_DIM,
            epochs: 200,
            learning_rate: 5e-4,
            weight_decay: 0.01,
            batch_size: 256,
        }
    }
}

impl DenoiserConfig {
    pub fn architecture(&self, dim: usize) -> Architecture {
        Architecture {
            input_dim: dim,
            hidden: self.hidden.clone(),
            output_dim: dim,
            layer_norm: true,
            time_embed_dim: self.time_embed_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedDenoiser {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Mlp,
    pub best_epoch: usize,
    pub log: Vec<DenoiserEpoch>,
}

/// Mean over rows of `‖ε − ε̂(x_t, t)‖²` and its gradient w.r.t. `ε̂`.
fn eps_loss(pred: &Array2<f64>, noise: &Array2<f64>) -> (f64, Array2<f64>) {
    let rows = pred.nrows() as f64;
    let diff = pred - noise;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / rows;
    (loss, diff * (2.0 / rows))
}

/// Denoising loss of `model` on clean designs `x0` at timesteps `t` with
/// the given noise.
pub fn denoising_loss(
    model: &Mlp,
    x0: ArrayView2<f64>,
    t: &[usize],
    noise: ArrayView2<f64>,
    sched: &DiffusionSchedule,
) -> Result<f64> {
    let x_t = forward_noise_batch(x0, t, noise, sched)?;
    let pred = model.predict(x_t.view(), t)?;
    Ok(eps_loss(&pred, &noise.to_owned()).0)
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Rows sorted lexicographically, so training depends only on the set of rows.
pub(crate) fn canonical_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let cols = x.ncols();
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).expect("rectangular")
}

/// Fits `ε_θ(x_t, t)` by minimizing `E‖ε − ε_θ(x_t, t)‖²` with `t` uniform on
/// `1..=T`, using AdamW. Returns the best-validation-loss parameters.
pub fn train_denoiser(
    train: ArrayView2<f64>,
    valid: ArrayView2<f64>,
    sched: &DiffusionSchedule,
    cfg: &DenoiserConfig,
    seed: u64,
) -> Result<TrainedDenoiser> {
    let mut init = stream(seed, StreamTag::Init, 0);
    let model = Mlp::new(cfg.architecture(train.ncols()), &mut init)?;
    train_denoiser_from(model, train, valid, sched, cfg, seed)
}

/// [`train_denoiser`] starting from given parameters.
pub fn train_denoiser_from(
    mut model: Mlp,
    train: ArrayView2<f64>,
    valid: ArrayView2<f64>,
    sched: &DiffusionSchedule,
    cfg: &DenoiserConfig,
    seed: u64,
) -> Result<TrainedDenoiser> {
    if train.nrows() == 0 {
        return Err(Error::Config("no training designs".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if valid.ncols() != train.ncols() && valid.nrows() > 0 {
        return Err(Error::Shape("train and validation widths differ".into()));
    }
    let dim = train.ncols();
    let train = canonical_rows(train);

    // Fixed validation draws keep the validation loss comparable across epochs.
    let mut vrng = stream(seed, StreamTag::DenoiserValidation, 0);
    let valid_t: Vec<usize> = (0..valid.nrows())
        .map(|_| vrng.gen_range(1..=sched.steps()))
        .collect();
    let valid_noise = gaussian_matrix(&mut vrng, valid.nrows(), dim);

    let mut opt = OptimizerState::new(
        AdamConfig::adamw(cfg.learning_rate, cfg.weight_decay),
        &model.tensors(),
    );
    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.nrows()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = stream(seed, StreamTag::DenoiserTraining, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x0 = train.select(Axis(0), chunk);
            let t: Vec<usize> = (0..chunk.len())
                .map(|_| rng.gen_range(1..=sched.steps()))
                .collect();
            let noise = gaussian_matrix(&mut rng, chunk.len(), dim);
            let x_t = forward_noise_batch(x0.view(), &t, noise.view(), sched)?;
            let (pred, cache) = model.forward(x_t.view(), &t)?;
            let (loss, grad) = eps_loss(&pred, &noise);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "denoiser loss at epoch {epoch} is {loss}"
                )));
            }
            total += loss * chunk.len() as f64;
            let grads = model.backward(&cache, grad.view())?;
            opt.step(model.params_mut(), &grads.tensors())?;
        }
        let train_loss = total / train.nrows() as f64;
        let valid_loss = if valid.nrows() > 0 {
            denoising_loss(&model, valid, &valid_t, valid_noise.view(), sched)?
        } else {
            train_loss
        };
        log::debug!("denoiser epoch {epoch}: train {train_loss:.5} valid {valid_loss:.5}");
        log.push(DenoiserEpoch {
            epoch,
            train_loss,
            valid_loss,
        });
        if best.as_ref().map_or(true, |(b, _, _)| valid_loss < *b) {
            best = Some((valid_loss, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.unwrap_or((f64::NAN, 0, model));
    Ok(TrainedDenoiser {
        model,
        best_epoch,
        log,
    })
}

/// Standard normal start state for chain `chain` under `seed`, with the
/// chain's private random stream positioned after the draw.
pub(crate) fn chain_stream(seed: u64, chain: usize) -> rand_chacha::ChaCha8Rng {
    stream(seed, StreamTag::Sampling, chain as u64)
}

/// Ancestral sampling of `n` independent chains from `x_T ~ N(0, I)`; the
/// last step (t = 1) returns the mean without noise. Designs are clamped to
/// `[−1, 1]^d` afterwards.
pub fn unconditional_sample(
    model: &Mlp,
    sched: &DiffusionSchedule,
    n: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let mut x = unconditional_chains(model, sched, n, seed)?;
    x.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    Ok(x)
}

/// [`unconditional_sample`] without the final clamp.
pub fn unconditional_chains(
    model: &Mlp,
    sched: &DiffusionSchedule,
    n: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let dim = model.architecture().input_dim;
    let mut rngs: Vec<_> = (0..n).map(|c| chain_stream(seed, c)).collect();
    let mut x = Array2::zeros((n, dim));
    for (mut row, rng) in x.rows_mut().into_iter().zip(rngs.iter_mut()) {
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    for t in (1..=sched.steps()).rev() {
        let mean = reverse_mean(model, x.view(), t, sched)?;
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
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("unconditional sample".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_step_schedule() {
        let s = DiffusionSchedule::linear(2, 0.1, 0.2).unwrap();
        assert_eq!(s.betas(), &[0.1, 0.2]);
        assert_eq!(s.alpha(1), 0.9);
        assert_eq!(s.alpha(2), 0.8);
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
    }

    #[test]
    fn endpoints_are_exact() {
        let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.beta(1), 1e-4);
        assert_eq!(s.beta(1000), 0.02);
        assert!(s.betas().windows(2).all(|w| w[0] < w[1]));
        assert!(s.alpha_bars().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn long_schedule_terminal_alpha_bar() {
        // Π_{t=1}^{1000} (1 − β_t) ≈ 4.0358e-5, evaluated with an independent log-sum.
        let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let log_sum: f64 = (0..1000)
            .map(|i| (1.0 - (1e-4 + i as f64 / 999.0 * (0.02 - 1e-4))).ln())
            .sum();
        assert!((s.alpha_bar(1000) - log_sum.exp()).abs() < 1e-15);
        assert!(s.alpha_bar(1000) < 1e-4);
        assert!((s.alpha_bar(1000) - 4.0358e-5).abs() < 1e-8);
    }

    #[test]
    fn cumulative_product_matches_reverse_recomputation() {
        let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
        // ᾱ_t = ᾱ_T / Π_{i>t} α_i
        let mut tail = 1.0;
        for t in (1..=1000).rev() {
            let recomputed = s.alpha_bar(1000) / tail;
            assert!((recomputed - s.alpha_bar(t)).abs() <= 1e-15 + 1e-12 * s.alpha_bar(t));
            tail *= s.alpha(t);
        }
    }

    #[test]
    fn invalid_schedules() {
        assert!(DiffusionSchedule::linear(1, 0.1, 0.2).is_err());
        assert!(DiffusionSchedule::linear(10, 0.2, 0.1).is_err());
        assert!(DiffusionSchedule::linear(10, 0.0, 0.1).is_err());
        assert!(DiffusionSchedule::linear(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn noising_edge_cases() {
        let s = DiffusionSchedule::linear(10, 0.1, 0.2).unwrap();
        let x0 = [1.0, -2.0];
        let out = forward_noise(&x0, 3, &[0.0, 0.0], &s).unwrap();
        let a = s.alpha_bar(3).sqrt();
        assert_eq!(out, vec![a * 1.0, a * -2.0]);
        assert!(matches!(forward_noise(&x0, 0, &[0.0, 0.0], &s), Err(Error::Range(_))));
        assert!(matches!(forward_noise(&x0, 11, &[0.0, 0.0], &s), Err(Error::Range(_))));
    }

    #[test]
    fn no_noise_limit() {
        // ᾱ → 1 as β → 0: the smallest legal schedule leaves x0 nearly untouched.
        let s = DiffusionSchedule::linear(2, 1e-15, 2e-15).unwrap();
        let out = forward_noise(&[0.7], 1, &[1.0], &s).unwrap();
        assert!((out[0] - 0.7).abs() < 1e-7);
    }

    fn linear_model(dim: usize) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Mlp::new(
            Architecture {
                input_dim: dim,
                hidden: vec![],
                output_dim: dim,
                layer_norm: false,
                time_embed_dim: 0,
            },
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn zero_predictor_mean() {
        let s = DiffusionSchedule::linear(10, 0.1, 0.2).unwrap();
        let mut m = linear_model(2);
        m.zero_output_layer();
        let x = array![[0.4, -1.0]];
        let mu = reverse_mean(&m, x.view(), 4, &s).unwrap();
        let a = s.alpha(4).sqrt();
        assert_eq!(mu, array![[0.4 / a, -1.0 / a]]);
    }

    #[test]
    fn perfect_denoiser_mean_hand_expansion() {
        // d = 1, t = 1: ε̂ = (x_t − √ᾱ₁ x0)/√(1−ᾱ₁) and ᾱ₁ = α₁, so
        // μ = (x_t − (1−α₁)(x_t − √α₁ x0)/(1−α₁)) / √α₁ = x0.
        let s = DiffusionSchedule::linear(10, 0.1, 0.2).unwrap();
        let x0 = 0.3;
        let x_t = 1.7;
        let eps = (x_t - s.alpha_bar(1).sqrt() * x0) / (1.0 - s.alpha_bar(1)).sqrt();
        let mu = reverse_mean_from_eps(array![[x_t]].view(), array![[eps]].view(), 1, &s).unwrap();
        assert!((mu[[0, 0]] - x0).abs() < 1e-14);
    }

    #[test]
    fn mean_is_homogeneous_for_linear_predictor() {
        let s = DiffusionSchedule::linear(10, 0.1, 0.2).unwrap();
        let m = linear_model(3);
        let mut homogeneous = m.clone();
        homogeneous.layers[0].bias.fill(0.0);
        let x = array![[0.2, -0.5, 1.0]];
        let mu = reverse_mean(&homogeneous, x.view(), 5, &s).unwrap();
        let mu3 = reverse_mean(&homogeneous, (&x * 3.0).view(), 5, &s).unwrap();
        for (a, b) in mu.iter().zip(mu3.iter()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_initial_loss_is_chi_square_mean() {
        let d = 10;
        let s = DiffusionSchedule::linear(200, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = Mlp::new(DenoiserConfig { hidden: vec![16], ..Default::default() }.architecture(d), &mut rng).unwrap();
        m.zero_output_layer();
        let mut total = 0.0;
        for _ in 0..1000 {
            let x0 = Array2::from_shape_simple_fn((32, d), || rng.gen_range(-1.0..1.0));
            let t: Vec<usize> = (0..32).map(|_| rng.gen_range(1..=200)).collect();
            let noise = gaussian_matrix(&mut rng, 32, d);
            total += denoising_loss(&m, x0.view(), &t, noise.view(), &s).unwrap();
        }
        let mean = total / 1000.0;
        assert!((mean - d as f64).abs() < 0.05 * d as f64, "mean loss {mean}");
    }

    fn tiny_config(epochs: usize) -> DenoiserConfig {
        DenoiserConfig {
            hidden: vec![32, 32],
            time_embed_dim: 16,
            epochs,
            learning_rate: 2e-3,
            weight_decay: 0.01,
            batch_size: 64,
        }
    }

    #[test]
    fn training_is_invariant_to_row_order() {
        let s = DiffusionSchedule::linear(50, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = Array2::from_shape_simple_fn((100, 3), || rng.gen_range(-1.0..1.0));
        let mut reversed = data.clone();
        reversed.invert_axis(Axis(0));
        let empty = Array2::<f64>::zeros((0, 3));
        let a = train_denoiser(data.view(), empty.view(), &s, &tiny_config(3), 5).unwrap();
        let b = train_denoiser(reversed.view(), empty.view(), &s, &tiny_config(3), 5).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let s = DiffusionSchedule::linear(50, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = Array2::from_shape_simple_fn((256, 2), || rng.gen_range(-1.0..1.0) * 0.1 + 0.5);
        let valid = Array2::from_shape_simple_fn((64, 2), || rng.gen_range(-1.0..1.0) * 0.1 + 0.5);
        let a = train_denoiser(data.view(), valid.view(), &s, &tiny_config(20), 1).unwrap();
        let b = train_denoiser(data.view(), valid.view(), &s, &tiny_config(20), 1).unwrap();
        assert_eq!(a.model, b.model);
        let first = a.log.first().unwrap().train_loss;
        let last = a.log.last().unwrap().train_loss;
        assert!(last < first, "{first} -> {last}");
        let best = a.log.iter().map(|e| e.valid_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.log[a.best_epoch].valid_loss, best);
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = DiffusionSchedule::linear(20, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::new(tiny_config(1).architecture(3), &mut rng).unwrap();
        let a = unconditional_sample(&m, &s, 5, 77).unwrap();
        let b = unconditional_sample(&m, &s, 5, 77).unwrap();
        let c = unconditional_sample(&m, &s, 5, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
