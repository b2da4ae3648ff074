//! Pretrain/finetune forecasting with dataset-supervised contrastive
//! representations.
//!
//! A shared univariate encoder/decoder is pretrained on windows drawn from
//! several datasets with a prediction loss plus a supervised contrastive
//! loss whose labels are the dataset of origin. A softmax over per-dataset
//! similarity sums then estimates how close a new sample is to each
//! pretraining dataset, and that estimate decides which datasets act as
//! positives and negatives in the contrastive term used during finetuning.

pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
