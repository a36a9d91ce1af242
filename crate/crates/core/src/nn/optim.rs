use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyperparameters. A non-zero `weight_decay` turns on the decoupled
/// (AdamW) decay `p ← p·(1 − lr·λ)` ahead of each Adam update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            weight_decay,
            ..Self::adam(lr)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&[f64]]) -> Self {
        Self {
            config,
            step: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Parameters are left untouched when any
    /// gradient is non-finite.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[k].len() {
                return Err(Error::Shape(format!("tensor {k} length mismatch")));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient tensor {k} entry {i}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let decay = 1.0 - lr * weight_decay;
        for (k, p) in params.iter_mut().enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for (((p, &g), m), v) in p.iter_mut().zip(grads[k]).zip(m.iter_mut()).zip(v.iter_mut()) {
                if weight_decay != 0.0 {
                    *p *= decay;
                }
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
