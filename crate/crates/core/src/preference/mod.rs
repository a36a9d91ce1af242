//! Pareto structure and the pairwise preference classifier.

mod classifier;
mod dominance;
mod labels;

pub use classifier::{
    pair_accuracy, preference_logits, preference_score_grad, strict_dominance_accuracy,
    train_preference, GradientMode, LabeledDesigns, PreferenceConfig, PreferenceEpoch,
    TrainedClassifier,
};
pub use dominance::{
    crowding_distance, dominates, nondominated_indices, nondominated_sort, FrontAssignment,
};
pub use labels::{
    hv_contributions, hv_improvement_score, DiversityCriterion, PairLabeler, PreferencePair,
    Provenance,
};
