//! Objectives and the dataset-similarity estimator, each with analytic
//! gradients with respect to the representations it receives.

mod contrastive;
mod kernel;
mod mse;
mod objective;

pub use contrastive::{
    ftcon_batch, ftcon_loss, gate_sets, probabilities_from_similarities, similarity_probabilities,
    supcon_loss, ContrastiveOutput, FtconBatch, GateSets, ProbabilityVector, ReferenceSet,
};
pub use kernel::{Embedded, KernelKind, SimilarityKernel};
pub use mse::mse_loss;
pub use objective::{finetune_objective, pretrain_objective, reference_from_model, ObjectiveOutput};
