//! From CSV files to windows. Normalization statistics only ever come from
//! the train split, and the pretrain collection balances its datasets.

mod collection;
mod dataset;
pub mod synthetic;
mod window;

pub use collection::{
    batches, build_collection, equally_spaced, BatchMode, CollectionSource, DatasetSampling,
    FeatureSelection, PretrainCollection, StratifiedSampler,
};
pub use dataset::{
    chronological_split, ingest_csv, write_csv, NormalizationStats, PreparedDataset, RawDataset,
    SplitRanges, SplitSpec,
};
pub use window::{
    dataset_windows, stack_inputs, stack_targets, window_count, window_starts, windows,
    WindowSample,
};
