//! JSON checkpoint container: architecture, named tensors with explicit
//! shapes, free-form string metadata and a format version.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Architecture, Dense, LayerNorm, Mlp};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    architecture: Architecture,
    tensors: Vec<NamedTensor>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// A model together with the metadata stored next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let tensors = self
            .model
            .tensor_shapes()
            .into_iter()
            .zip(self.model.tensors())
            .map(|((name, shape), data)| NamedTensor {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            architecture: self.model.architecture().clone(),
            tensors,
            metadata: self.metadata.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let arch = file.architecture;
        arch.validate()?;
        let mut tensors: BTreeMap<String, NamedTensor> =
            file.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let mut take = |name: &str| {
            let t = tensors
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Checkpoint(format!("tensor {name} has inconsistent shape")));
            }
            Ok(t)
        };
        let matrix = |t: NamedTensor| -> Result<Array2<f64>> {
            match t.shape[..] {
                [r, c] => Array2::from_shape_vec((r, c), t.data)
                    .map_err(|e| Error::Checkpoint(e.to_string())),
                _ => Err(Error::Checkpoint(format!("tensor {} is not a matrix", t.name))),
            }
        };
        let vector = |t: NamedTensor| -> Result<Array1<f64>> {
            match t.shape[..] {
                [_] => Ok(Array1::from(t.data)),
                _ => Err(Error::Checkpoint(format!("tensor {} is not a vector", t.name))),
            }
        };

        let mut layers = Vec::new();
        for k in 0..arch.layer_shapes().len() {
            layers.push(Dense {
                weight: matrix(take(&format!("layer{k}.weight"))?)?,
                bias: vector(take(&format!("layer{k}.bias"))?)?,
            });
        }
        let mut norms = Vec::new();
        if arch.layer_norm {
            for k in 0..arch.hidden.len() {
                norms.push(LayerNorm {
                    gain: vector(take(&format!("norm{k}.gain"))?)?,
                    shift: vector(take(&format!("norm{k}.shift"))?)?,
                });
            }
        }
        let time_proj = if arch.time_embed_dim > 0 {
            Some(matrix(take("time_proj.weight")?)?)
        } else {
            None
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        let model = Mlp::from_parts(arch, layers, norms, time_proj)?;
        Ok(Self {
            model,
            metadata: file.metadata,
        })
    }
}

pub fn save_checkpoint(path: &Path, model: &Mlp, metadata: BTreeMap<String, String>) -> Result<()> {
    let text = Checkpoint {
        model: model.clone(),
        metadata,
    }
    .to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}
