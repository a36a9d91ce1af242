use ndarray::Array2;

use crate::error::{Error, Result};

pub const DEFAULT_TIME_EMBED_DIM: usize = 128;

const FREQUENCY_BASE: f64 = 10_000.0;

/// Sinusoidal timestep embedding with interleaved sin/cos pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEmbedding {
    dim: usize,
}

impl TimeEmbedding {
    pub fn new(dim: usize) -> Result<Self> {
        if dim % 2 != 0 {
            return Err(Error::Config(format!(
                "time embedding dimension must be even, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the embedding of `t` into `out` (length `dim`).
    pub fn embed_into(&self, t: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let t = t as f64;
        for k in 0..self.dim / 2 {
            let freq = FREQUENCY_BASE.powf(2.0 * k as f64 / self.dim as f64);
            let angle = t / freq;
            out[2 * k] = angle.sin();
            out[2 * k + 1] = angle.cos();
        }
    }

    pub fn embed(&self, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.embed_into(t, &mut out);
        out
    }

    /// One row per timestep.
    pub fn embed_batch(&self, ts: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((ts.len(), self.dim));
        for (row, &t) in out.rows_mut().into_iter().zip(ts) {
            let mut row = row;
            self.embed_into(t, row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Convenience wrapper around [`TimeEmbedding::embed`].
pub fn time_embed(t: usize, dim: usize) -> Result<Vec<f64>> {
    Ok(TimeEmbedding::new(dim)?.embed(t))
}
