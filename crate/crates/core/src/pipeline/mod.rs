//! Training stages and the experiments built on them.

mod config;
mod experiment;
mod gradcheck;
mod record;
mod train;

pub use config::{FinetunePortion, ModelSpec, ReferenceRefresh, TrainConfig};
pub use experiment::{
    prepare_pretrain, similarity_report, stratified_reference, sweep, zero_shot, PreparedPretrain, PretrainSource,
    SweepAxis, SweepTable,
};
pub use gradcheck::{gradient_suites, suites_table, GradcheckConfig, SuiteResult, LOSSES};
pub use record::{EpochRecord, RunRecord};
pub use train::{draw_reference, finetune, finetune_rows, pretrain, pretrain_width_search, TrainRun};
