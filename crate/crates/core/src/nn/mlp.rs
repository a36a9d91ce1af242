use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embedding::TimeEmbedding;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer widths and conditioning of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Layer normalization after every hidden ReLU.
    pub layer_norm: bool,
    /// Sinusoidal embedding width; 0 disables time conditioning.
    pub time_embed_dim: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output widths must be positive".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        TimeEmbedding::new(self.time_embed_dim)?;
        Ok(())
    }

    /// `(out, in)` for every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    /// Width of the first pre-activation, which receives the time projection.
    pub fn first_width(&self) -> usize {
        self.hidden.first().copied().unwrap_or(self.output_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out × in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub shift: Array1<f64>,
}

/// Multilayer perceptron: `affine → (+ time projection on the first layer)
/// → ReLU → layer norm` per hidden layer, then an affine output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: Architecture,
    pub layers: Vec<Dense>,
    pub norms: Vec<LayerNorm>,
    /// `[first_width × time_embed_dim]`, present when time-conditioned.
    pub time_proj: Option<Array2<f64>>,
}

/// Activations kept by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_inputs: Vec<Array2<f64>>,
    relu_out: Vec<Array2<f64>>,
    normalized: Vec<Array2<f64>>,
    inv_std: Vec<Array1<f64>>,
    embedding: Option<Array2<f64>>,
}

/// Gradients laid out like the model parameters, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub norms: Vec<LayerNorm>,
    pub time_proj: Option<Array2<f64>>,
    pub input: Array2<f64>,
}

impl Gradients {
    /// Flat views in the same order as [`Mlp::params_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        for n in &self.norms {
            out.push(n.gain.as_slice().expect("standard layout"));
            out.push(n.shift.as_slice().expect("standard layout"));
        }
        if let Some(p) = &self.time_proj {
            out.push(p.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// He-uniform hidden layers, `±1/sqrt(fan_in)` output layer, zero biases,
    /// unit layer-norm gain.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        let n_layers = shapes.len();
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(k, &(out, inp))| {
                let bound = if k + 1 < n_layers {
                    (6.0 / inp as f64).sqrt()
                } else {
                    1.0 / (inp as f64).sqrt()
                };
                Dense {
                    weight: Array2::from_shape_fn((out, inp), |_| rng.gen_range(-bound..bound)),
                    bias: Array1::zeros(out),
                }
            })
            .collect();
        let norms = if arch.layer_norm {
            arch.hidden
                .iter()
                .map(|&w| LayerNorm {
                    gain: Array1::ones(w),
                    shift: Array1::zeros(w),
                })
                .collect()
        } else {
            Vec::new()
        };
        let time_proj = (arch.time_embed_dim > 0).then(|| {
            let bound = (6.0 / arch.time_embed_dim as f64).sqrt();
            Array2::from_shape_fn((arch.first_width(), arch.time_embed_dim), |_| {
                rng.gen_range(-bound..bound)
            })
        });
        Ok(Self {
            arch,
            layers,
            norms,
            time_proj,
        })
    }

    /// Builds a model from explicit parameters, checking every shape.
    pub fn from_parts(
        arch: Architecture,
        layers: Vec<Dense>,
        norms: Vec<LayerNorm>,
        time_proj: Option<Array2<f64>>,
    ) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (k, (l, &(out, inp))) in layers.iter().zip(&shapes).enumerate() {
            if l.weight.dim() != (out, inp) || l.bias.len() != out {
                return Err(Error::Shape(format!("layer {k} does not match {out}x{inp}")));
            }
        }
        let expected_norms = if arch.layer_norm { arch.hidden.len() } else { 0 };
        if norms.len() != expected_norms
            || norms
                .iter()
                .zip(&arch.hidden)
                .any(|(n, &w)| n.gain.len() != w || n.shift.len() != w)
        {
            return Err(Error::Shape("layer norm parameters do not match".into()));
        }
        match (&time_proj, arch.time_embed_dim) {
            (None, 0) => {}
            (Some(p), d) if p.dim() == (arch.first_width(), d) => {}
            _ => return Err(Error::Shape("time projection does not match".into())),
        }
        let mlp = Self {
            arch,
            layers,
            norms,
            time_proj,
        };
        if !mlp.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(mlp)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 < self.layers.len() {
            Activation::Relu
        } else {
            Activation::Identity
        }
    }

    /// Sets the output layer to zero so the network emits 0 everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.tensor_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Parameter names and shapes in canonical order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.weight"), l.weight.shape().to_vec()));
            out.push((format!("layer{k}.bias"), l.bias.shape().to_vec()));
        }
        for (k, n) in self.norms.iter().enumerate() {
            out.push((format!("norm{k}.gain"), n.gain.shape().to_vec()));
            out.push((format!("norm{k}.shift"), n.shift.shape().to_vec()));
        }
        if let Some(p) = &self.time_proj {
            out.push(("time_proj.weight".into(), p.shape().to_vec()));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        for n in &self.norms {
            out.push(n.gain.as_slice().expect("standard layout"));
            out.push(n.shift.as_slice().expect("standard layout"));
        }
        if let Some(p) = &self.time_proj {
            out.push(p.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        for n in &mut self.norms {
            out.push(n.gain.as_slice_mut().expect("standard layout"));
            out.push(n.shift.as_slice_mut().expect("standard layout"));
        }
        if let Some(p) = &mut self.time_proj {
            out.push(p.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>, t: &[usize]) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input width {} does not match model input {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        if t.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "{} timesteps for {} rows",
                t.len(),
                x.nrows()
            )));
        }
        Ok(())
    }

    fn embedding(&self, t: &[usize]) -> Option<Array2<f64>> {
        self.time_proj.as_ref().map(|_| {
            TimeEmbedding::new(self.arch.time_embed_dim)
                .expect("validated")
                .embed_batch(t)
        })
    }

    /// Batched forward pass; row `i` of `x` is evaluated at timestep `t[i]`.
    pub fn forward(&self, x: ArrayView2<f64>, t: &[usize]) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x, t)?;
        let embedding = self.embedding(t);
        let mut cache = ForwardCache {
            layer_inputs: Vec::with_capacity(self.layers.len()),
            relu_out: Vec::new(),
            normalized: Vec::new(),
            inv_std: Vec::new(),
            embedding: None,
        };
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&h, layer);
            if k == 0 {
                if let (Some(e), Some(p)) = (&embedding, &self.time_proj) {
                    general_mat_mul(1.0, e, &p.t(), 1.0, &mut z);
                }
            }
            cache.layer_inputs.push(h);
            if self.activation(k) == Activation::Identity {
                h = z;
                continue;
            }
            z.mapv_inplace(|v| v.max(0.0));
            if self.arch.layer_norm {
                let (normed, inv_std) = normalize_rows(&z);
                let norm = &self.norms[k];
                h = &normed * &norm.gain + &norm.shift;
                cache.normalized.push(normed);
                cache.inv_std.push(inv_std);
            } else {
                h = z.clone();
            }
            cache.relu_out.push(z);
        }
        cache.embedding = embedding;
        Ok((h, cache))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: ArrayView2<f64>, t: &[usize]) -> Result<Array2<f64>> {
        self.check_input(&x, t)?;
        let embedding = self.embedding(t);
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&h, layer);
            if k == 0 {
                if let (Some(e), Some(p)) = (&embedding, &self.time_proj) {
                    general_mat_mul(1.0, e, &p.t(), 1.0, &mut z);
                }
            }
            if self.activation(k) == Activation::Identity {
                h = z;
                continue;
            }
            z.mapv_inplace(|v| v.max(0.0));
            if self.arch.layer_norm {
                let (normed, _) = normalize_rows(&z);
                let norm = &self.norms[k];
                h = &normed * &norm.gain + &norm.shift;
            } else {
                h = z;
            }
        }
        Ok(h)
    }

    /// Single-row forward pass.
    pub fn forward_one(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict(view, &[t])?.row(0).to_vec())
    }

    /// Reverse-mode pass for the batch in `cache`. `output_grad` is the
    /// gradient of the loss with respect to the network output.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Gradients> {
        self.backward_impl(cache, output_grad, true)
    }

    /// Like [`Mlp::backward`] but only the input gradient is computed;
    /// parameter gradients are returned empty.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(self.backward_impl(cache, output_grad, false)?.input)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
        params: bool,
    ) -> Result<Gradients> {
        let batch = cache.layer_inputs.first().map_or(0, |x| x.nrows());
        if output_grad.dim() != (batch, self.arch.output_dim) {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match ({batch}, {})",
                output_grad.dim(),
                self.arch.output_dim
            )));
        }
        if cache.layer_inputs.len() != self.layers.len() {
            return Err(Error::Shape("cache does not belong to this model".into()));
        }
        let n_layers = self.layers.len();
        let mut layer_grads: Vec<Option<Dense>> = vec![None; n_layers];
        let mut norm_grads: Vec<Option<LayerNorm>> = vec![None; self.norms.len()];
        let mut time_grad = None;

        let mut grad = output_grad.to_owned();
        for k in (0..n_layers).rev() {
            // `grad` is d(loss)/d(layer k output) here.
            if self.activation(k) == Activation::Relu {
                let relu = &cache.relu_out[k];
                if self.arch.layer_norm {
                    let normed = &cache.normalized[k];
                    let norm = &self.norms[k];
                    if params {
                        norm_grads[k] = Some(LayerNorm {
                            gain: (&grad * normed).sum_axis(Axis(0)),
                            shift: grad.sum_axis(Axis(0)),
                        });
                    }
                    let dn = &grad * &norm.gain;
                    grad = layer_norm_backward(&dn, normed, &cache.inv_std[k]);
                }
                grad.zip_mut_with(relu, |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            // `grad` is now d(loss)/d(pre-activation k).
            let layer = &self.layers[k];
            if params {
                let input = &cache.layer_inputs[k];
                layer_grads[k] = Some(Dense {
                    weight: grad.t().dot(input).as_standard_layout().into_owned(),
                    bias: grad.sum_axis(Axis(0)),
                });
                if k == 0 {
                    if let Some(e) = &cache.embedding {
                        time_grad = Some(grad.t().dot(e).as_standard_layout().into_owned());
                    }
                }
            }
            grad = grad.dot(&layer.weight);
        }

        let (layers, norms) = if params {
            (
                layer_grads.into_iter().map(|g| g.expect("filled")).collect(),
                norm_grads.into_iter().map(|g| g.expect("filled")).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Gradients {
            layers,
            norms,
            time_proj: time_grad,
            input: grad,
        })
    }
}

fn affine(h: &Array2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = Array2::zeros((h.nrows(), layer.weight.nrows()));
    z.rows_mut().into_iter().for_each(|mut r| r.assign(&layer.bias));
    general_mat_mul(1.0, h, &layer.weight.t(), 1.0, &mut z);
    z
}

/// Row-wise `(a - mean) / sqrt(var + eps)` and the per-row `1/sqrt(var + eps)`.
fn normalize_rows(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let width = a.ncols() as f64;
    let mut out = a.clone();
    let mut inv = Array1::zeros(a.nrows());
    for (mut row, s) in out.rows_mut().into_iter().zip(inv.iter_mut()) {
        let mean = row.sum() / width;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / width;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| v * inv_std);
        *s = inv_std;
    }
    (out, inv)
}

fn layer_norm_backward(dn: &Array2<f64>, normed: &Array2<f64>, inv_std: &Array1<f64>) -> Array2<f64> {
    let width = dn.ncols() as f64;
    let mut out = Array2::zeros(dn.raw_dim());
    for (((mut o, g), n), &s) in out
        .rows_mut()
        .into_iter()
        .zip(dn.rows())
        .zip(normed.rows())
        .zip(inv_std)
    {
        let mean_g = g.sum() / width;
        let mean_gn = g.iter().zip(n.iter()).map(|(a, b)| a * b).sum::<f64>() / width;
        for ((o, &g), &n) in o.iter_mut().zip(g.iter()).zip(n.iter()) {
            *o = s * (g - mean_g - n * mean_gn);
        }
    }
    out
}
