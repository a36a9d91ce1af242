//! Experiment driver for preference-guided diffusion: configuration,
//! manifests and the cached gen-data → train → sample → evaluate pipeline.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use manifest::Manifest;
pub use pipeline::{Method, Pipeline, Sweep};
