//! ZDT/DTLZ test problems, offline dataset generation, pruning and IO.

mod dataset;
mod io;
mod problems;

pub use dataset::{
    denormalize_design, generate_dataset, normalize_design, prune_indices, prune_top_fraction,
    pruned_size, OfflineDataset, MIN_GENERATED_ROWS, TRAIN_FRACTION,
};
pub use io::{
    dataset_header, format_value, load_dataset, save_dataset, sidecar_path, DatasetMeta,
    DATASET_FORMAT_VERSION,
};
pub use problems::{Problem, ProblemKind};
