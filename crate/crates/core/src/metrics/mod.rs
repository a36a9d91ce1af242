//! Hypervolume, Δ-spread, objective normalization and rank aggregation.

mod hypervolume;
mod report;
mod spread;

pub use hypervolume::{
    hypervolume, hypervolume_monte_carlo, hypervolume_with_error, HvEstimate, DEFAULT_MC_SAMPLES,
};
pub use report::{
    aggregate, average_ranks, normalize_objectives, IndicatorReport, NormalizedObjectives,
    ObjectiveStats, RankTable, SeedIndicators, Summary, REFERENCE_COORD,
};
pub use spread::delta_spread;
