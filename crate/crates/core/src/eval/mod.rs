//! Test-split metrics and the tables built from them.

mod baselines;
mod metrics;
mod report;
mod similarity;

pub use baselines::{ratio_report, BaselineEntry, BaselineTable};
pub use metrics::{evaluate, evaluate_samples, evaluate_with, mse_mae, EvalResult, TEST_BATCH};
pub use report::{Cell, OutputFormat, Table};
pub use similarity::{similarity_matrix, SimilarityMatrix};
