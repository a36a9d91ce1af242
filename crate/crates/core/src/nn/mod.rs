//! Dense network substrate shared by the denoiser and the preference
//! classifier: batched forward/backward passes, layer normalization,
//! sinusoidal time conditioning, Adam/AdamW and checkpoints.

mod checkpoint;
mod embedding;
mod mlp;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use embedding::{time_embed, TimeEmbedding, DEFAULT_TIME_EMBED_DIM};
pub use mlp::{
    Activation, Architecture, Dense, ForwardCache, Gradients, LayerNorm, Mlp, LAYER_NORM_EPS,
};
pub use optim::{AdamConfig, OptimizerState};
