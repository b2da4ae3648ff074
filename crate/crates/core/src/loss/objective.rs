use super::contrastive::{ftcon_batch, supcon_loss, ReferenceSet};
use super::kernel::SimilarityKernel;
use super::mse::mse_loss;
use crate::error::Result;
use crate::model::{ForecastModel, ModelGradients};
use crate::numerics::Matrix;

/// Value and parameter gradients of a composite objective.
#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub total: f64,
    pub mse: f64,
    pub contrastive: f64,
    pub grads: ModelGradients,
}

/// `mse + λ·SupCon` on one labelled batch.
pub fn pretrain_objective(
    model: &ForecastModel,
    inputs: &Matrix,
    targets: &Matrix,
    labels: &[usize],
    lambda: f64,
    kernel: &SimilarityKernel,
) -> Result<ObjectiveOutput> {
    let pass = model.forward(inputs)?;
    let (mse, d_pred) = mse_loss(&pass.predictions, targets)?;
    let con = supcon_loss(&pass.contrastive, labels, kernel)?;
    let d_con = (lambda != 0.0).then(|| {
        let mut g = con.grad.clone();
        g.scale(lambda);
        g
    });
    let (grads, _) = model.backward(&pass, Some(&d_pred), d_con.as_ref())?;
    Ok(ObjectiveOutput {
        total: mse + lambda * con.loss,
        mse,
        contrastive: con.loss,
        grads,
    })
}

/// `mse + λ′·FTCon`, with gates recomputed per anchor against `reference`.
/// The reference is a constant: gradients reach the model only through the
/// anchors.
pub fn finetune_objective(
    model: &ForecastModel,
    inputs: &Matrix,
    targets: &Matrix,
    reference: &ReferenceSet,
    lambda: f64,
) -> Result<ObjectiveOutput> {
    let pass = model.forward(inputs)?;
    let (mse, d_pred) = mse_loss(&pass.predictions, targets)?;
    let (contrastive, d_con) = if lambda != 0.0 {
        let ft = ftcon_batch(&pass.contrastive, reference)?;
        let mut g = ft.output.grad;
        g.scale(lambda);
        (ft.output.loss, Some(g))
    } else {
        (0.0, None)
    };
    let (grads, _) = model.backward(&pass, Some(&d_pred), d_con.as_ref())?;
    Ok(ObjectiveOutput {
        total: mse + lambda * contrastive,
        mse,
        contrastive,
        grads,
    })
}

/// Encodes reference samples with the current weights (no gradient) into a
/// reference set over `num_datasets` labels.
pub fn reference_from_model(
    model: &ForecastModel,
    inputs: &Matrix,
    labels: Vec<usize>,
    num_datasets: usize,
    kernel: SimilarityKernel,
) -> Result<ReferenceSet> {
    let reps = model.contrastive_view(&model.encode(inputs)?)?;
    ReferenceSet::new(&reps, labels, num_datasets, kernel)
}
