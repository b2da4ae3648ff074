//! The channel-independent forecaster and its on-disk checkpoint format.

mod checkpoint;
mod network;

pub use checkpoint::{Checkpoint, TrainingMetadata, FORMAT, VERSION};
pub use network::{
    parameter_count, Affine, ForecastModel, ForwardPass, ModelConfig, ModelGradients, Variation,
};
