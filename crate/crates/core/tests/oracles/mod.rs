//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the crate's numerical code; each routine is a
//! direct, slow restatement of the definition.

#![allow(dead_code)]

use std::f64::consts::PI;

use pgd_core::nn::Mlp;
use rand::Rng;

/// Loop-only forward pass of `model` for one row at timestep `t`.
pub fn mlp_forward(model: &Mlp, x: &[f64], t: usize) -> Vec<f64> {
    let arch = model.architecture();
    let n_layers = model.layers.len();
    let mut h: Vec<f64> = x.to_vec();
    for (k, layer) in model.layers.iter().enumerate() {
        let (out, inp) = layer.weight.dim();
        let mut z = vec![0.0; out];
        for i in 0..out {
            let mut s = layer.bias[i];
            for j in 0..inp {
                s += layer.weight[[i, j]] * h[j];
            }
            z[i] = s;
        }
        if k == 0 {
            if let Some(p) = &model.time_proj {
                let dim = arch.time_embed_dim;
                let mut e = vec![0.0; dim];
                for q in 0..dim / 2 {
                    let w = (t as f64) / 10_000f64.powf(2.0 * q as f64 / dim as f64);
                    e[2 * q] = w.sin();
                    e[2 * q + 1] = w.cos();
                }
                for i in 0..out {
                    for j in 0..dim {
                        z[i] += p[[i, j]] * e[j];
                    }
                }
            }
        }
        if k + 1 == n_layers {
            return z;
        }
        for v in z.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if arch.layer_norm {
            let mean = z.iter().sum::<f64>() / out as f64;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / out as f64;
            let norm = &model.norms[k];
            for i in 0..out {
                z[i] = (z[i] - mean) / (var + 1e-5).sqrt() * norm.gain[i] + norm.shift[i];
            }
        }
        h = z;
    }
    h
}

/// `|a − b| / max(|a|, |b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Front indices by repeated removal of the non-dominated set.
pub fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<usize> {
    let dominates = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
    };
    let n = points.len();
    let mut front = vec![usize::MAX; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut level = 0;
    while !remaining.is_empty() {
        let current: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        for &i in &current {
            front[i] = level;
        }
        remaining.retain(|i| !current.contains(i));
        level += 1;
    }
    front
}

/// Monte Carlo hypervolume over the box `[lo, reference]`, with its
/// standard error.
pub fn mc_hypervolume<R: Rng>(
    points: &[Vec<f64>],
    reference: &[f64],
    lo: &[f64],
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let volume: f64 = lo.iter().zip(reference).map(|(a, b)| b - a).product();
    let mut hits = 0usize;
    let mut s = vec![0.0; reference.len()];
    for _ in 0..samples {
        for k in 0..s.len() {
            s[k] = lo[k] + rng.gen::<f64>() * (reference[k] - lo[k]);
        }
        if points.iter().any(|p| p.iter().zip(&s).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (volume * p, volume * (p * (1.0 - p) / samples as f64).sqrt())
}

/// ZDT and DTLZ objective functions as stated in the literature.
pub fn literature_objectives(name: &str, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    match name {
        "zdt1" | "zdt2" | "zdt3" => {
            let f1 = x[0];
            let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (n - 1) as f64;
            let r = f1 / g;
            let h = match name {
                "zdt1" => 1.0 - r.sqrt(),
                "zdt2" => 1.0 - r * r,
                _ => 1.0 - r.sqrt() - r * (10.0 * PI * f1).sin(),
            };
            vec![f1, g * h]
        }
        "zdt4" => {
            let f1 = x[0];
            let mut g = 1.0 + 10.0 * (n - 1) as f64;
            for &v in &x[1..] {
                g += v * v - 10.0 * (4.0 * PI * v).cos();
            }
            vec![f1, g * (1.0 - (f1 / g).sqrt())]
        }
        "zdt6" => {
            let f1 = 1.0 - (-4.0 * x[0]).exp() * (6.0 * PI * x[0]).sin().powi(6);
            let g = 1.0 + 9.0 * (x[1..].iter().sum::<f64>() / (n - 1) as f64).powf(0.25);
            vec![f1, g * (1.0 - (f1 / g) * (f1 / g))]
        }
        "dtlz1" | "dtlz3" => {
            let k = n - m + 1;
            let mut g = k as f64;
            for &v in &x[m - 1..] {
                g += (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos();
            }
            g *= 100.0;
            if name == "dtlz1" {
                (0..m)
                    .map(|i| {
                        let mut f = 0.5 * (1.0 + g);
                        for j in 0..m - 1 - i {
                            f *= x[j];
                        }
                        if i > 0 {
                            f *= 1.0 - x[m - 1 - i];
                        }
                        f
                    })
                    .collect()
            } else {
                let theta: Vec<f64> = x[..m - 1].iter().map(|v| v * PI / 2.0).collect();
                sphere(&theta, g, m)
            }
        }
        "dtlz2" | "dtlz4" => {
            let alpha = if name == "dtlz4" { 100.0 } else { 1.0 };
            let g: f64 = x[m - 1..].iter().map(|v| (v - 0.5).powi(2)).sum();
            let theta: Vec<f64> = x[..m - 1].iter().map(|v| v.powf(alpha) * PI / 2.0).collect();
            sphere(&theta, g, m)
        }
        "dtlz5" | "dtlz6" => {
            let g: f64 = if name == "dtlz5" {
                x[m - 1..].iter().map(|v| (v - 0.5).powi(2)).sum()
            } else {
                x[m - 1..].iter().map(|v| v.powf(0.1)).sum()
            };
            let mut theta = vec![x[0] * PI / 2.0];
            for &v in &x[1..m - 1] {
                theta.push(PI / (4.0 * (1.0 + g)) * (1.0 + 2.0 * g * v));
            }
            sphere(&theta, g, m)
        }
        "dtlz7" => {
            let k = (n - m + 1) as f64;
            let g = 1.0 + 9.0 / k * x[m - 1..].iter().sum::<f64>();
            let mut f: Vec<f64> = x[..m - 1].to_vec();
            let h = m as f64
                - f.iter()
                    .map(|v| v / (1.0 + g) * (1.0 + (3.0 * PI * v).sin()))
                    .sum::<f64>();
            f.push((1.0 + g) * h);
            f
        }
        other => panic!("no oracle for {other}"),
    }
}

fn sphere(theta: &[f64], g: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let mut f = 1.0 + g;
            for t in &theta[..m - 1 - i] {
                f *= t.cos();
            }
            if i > 0 {
                f *= theta[m - 1 - i].sin();
            }
            f
        })
        .collect()
}

/// Denominator floor for gradient relative errors. Central differences with
/// `h = 1e-5` carry absolute errors near `1e-10`, which would dominate the
/// relative error of components that are themselves almost zero.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Network families exercised by the gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Two hidden layers, output width equal to the input width.
    Denoiser,
    /// Three hidden layers over a concatenated pair, one logit.
    Classifier,
}

/// A small randomly shaped and randomly parameterized network.
pub fn random_network<R: Rng>(family: Family, rng: &mut R) -> Mlp {
    use pgd_core::nn::Architecture;
    let d = rng.gen_range(1..=4);
    let w = |rng: &mut R| rng.gen_range(2..=7);
    let arch = match family {
        Family::Denoiser => Architecture {
            input_dim: d,
            hidden: vec![w(rng), w(rng)],
            output_dim: d,
            layer_norm: true,
            time_embed_dim: 2 * rng.gen_range(1..=4),
        },
        Family::Classifier => Architecture {
            input_dim: 2 * d,
            hidden: vec![w(rng), w(rng), w(rng)],
            output_dim: 1,
            layer_norm: true,
            time_embed_dim: 2 * rng.gen_range(1..=4),
        },
    };
    let mut model = Mlp::new(arch, rng).unwrap();
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += 0.3 * (rng.gen::<f64>() - 0.5);
        }
    }
    model
}

fn weighted_output(model: &Mlp, x: &[Vec<f64>], t: &[usize], c: &[Vec<f64>]) -> f64 {
    x.iter()
        .zip(t)
        .zip(c)
        .map(|((row, &t), c)| {
            mlp_forward(model, row, t)
                .iter()
                .zip(c)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum()
}

/// Largest relative error between backprop gradients (parameters and
/// inputs) of `Σ c ⊙ f(x)` and central differences with step `1e-5`,
/// evaluated through [`mlp_forward`].
pub fn max_gradient_error<R: Rng>(model: &Mlp, batch: usize, rng: &mut R) -> f64 {
    use ndarray::Array2;
    let arch = model.architecture().clone();
    let x: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..arch.input_dim).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect();
    let t: Vec<usize> = (0..batch).map(|_| rng.gen_range(1..=1000)).collect();
    let c: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..arch.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let xa = Array2::from_shape_fn((batch, arch.input_dim), |(i, j)| x[i][j]);
    let ca = Array2::from_shape_fn((batch, arch.output_dim), |(i, j)| c[i][j]);
    let (_, cache) = model.forward(xa.view(), &t).unwrap();
    let grads = model.backward(&cache, ca.view()).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;

    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|g| g.to_vec()).collect();
    for (ti, tensor) in analytic.iter().enumerate() {
        for (j, &a) in tensor.iter().enumerate() {
            let mut plus = model.clone();
            plus.params_mut()[ti][j] += h;
            let mut minus = model.clone();
            minus.params_mut()[ti][j] -= h;
            let fd = (weighted_output(&plus, &x, &t, &c) - weighted_output(&minus, &x, &t, &c)) / (2.0 * h);
            worst = worst.max(rel_err(a, fd, GRAD_FLOOR));
        }
    }
    for i in 0..batch {
        for j in 0..arch.input_dim {
            let mut xp = x.clone();
            xp[i][j] += h;
            let mut xm = x.clone();
            xm[i][j] -= h;
            let fd = (weighted_output(model, &xp, &t, &c) - weighted_output(model, &xm, &t, &c)) / (2.0 * h);
            worst = worst.max(rel_err(grads.input[[i, j]], fd, GRAD_FLOOR));
        }
    }
    worst
}

/// Largest relative error of the guidance gradient against central
/// differences of `log σ(z)` or `σ(z)` in the first design.
pub fn max_guidance_gradient_error<R: Rng>(
    model: &Mlp,
    mode: pgd_core::preference::GradientMode,
    rng: &mut R,
) -> f64 {
    use ndarray::Array2;
    use pgd_core::preference::{preference_score_grad, GradientMode};
    let d = model.architecture().input_dim / 2;
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let r: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let t = rng.gen_range(1..=1000);
    let score = |x: &[f64]| {
        let input: Vec<f64> = x.iter().chain(&r).copied().collect();
        let z = mlp_forward(model, &input, t)[0];
        let p = 1.0 / (1.0 + (-z).exp());
        match mode {
            GradientMode::LogProb => p.ln(),
            GradientMode::RawProb => p,
        }
    };
    let xa = Array2::from_shape_vec((1, d), x.clone()).unwrap();
    let ra = Array2::from_shape_vec((1, d), r.clone()).unwrap();
    let g = preference_score_grad(model, xa.view(), ra.view(), t, mode).unwrap();
    let h = 1e-5;
    (0..d)
        .map(|j| {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            rel_err(g[[0, j]], (score(&xp) - score(&xm)) / (2.0 * h), GRAD_FLOOR)
        })
        .fold(0.0, f64::max)
}

/// Checks the pruning contract on `y`: exactly `⌈fraction·N⌉` kept and no
/// kept point on a worse front than a discarded one. Returns a description
/// of the first violation.
pub fn check_pruning(y: &[Vec<f64>], fraction: f64) -> Result<(), String> {
    let kept = pgd_core::benchmarks::prune_indices(y, fraction).map_err(|e| e.to_string())?;
    let want = (fraction * y.len() as f64 - 1e-9).ceil() as usize;
    if kept.len() != want {
        return Err(format!("kept {} of {}, expected {want}", kept.len(), y.len()));
    }
    let fronts = brute_force_fronts(y);
    let worst_kept = kept.iter().map(|&i| fronts[i]).max().unwrap_or(0);
    let best_dropped = (0..y.len())
        .filter(|i| kept.binary_search(i).is_err())
        .map(|i| fronts[i])
        .min()
        .unwrap_or(usize::MAX);
    if worst_kept > best_dropped {
        return Err(format!("kept front {worst_kept} while dropping front {best_dropped}"));
    }
    Ok(())
}
