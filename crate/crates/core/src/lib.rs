//! Preference-guided diffusion for offline multi-objective optimization.
//!
//! An unconditional DDPM is trained on the designs of an offline dataset,
//! a time-conditioned classifier learns which of two designs Pareto
//! dominates the other (with a diversity tie-break inside a front), and
//! the classifier's input gradient steers reverse diffusion towards the
//! Pareto front.

pub mod benchmarks;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod preference;
pub mod rng;
pub mod sampler;

pub use benchmarks::{OfflineDataset, Problem, ProblemKind};
pub use diffusion::{DenoiserConfig, DiffusionSchedule};
pub use error::{Error, Result};
pub use metrics::{IndicatorReport, ObjectiveStats};
pub use nn::{Checkpoint, Mlp};
pub use preference::{DiversityCriterion, FrontAssignment, GradientMode, PreferenceConfig};
pub use sampler::{GuidanceConfig, SampleOutput};
