//! Analytic-versus-numeric gradient suites over every model variation and
//! objective, shared by the acceptance harness and the `gradcheck` command.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{Cell, Table};
use crate::loss::{
    finetune_objective, ftcon_batch, ftcon_loss, mse_loss, pretrain_objective, reference_from_model, supcon_loss,
    SimilarityKernel,
};
use crate::model::{ForecastModel, ModelConfig, Variation};
use crate::numerics::{finite_diff_grad_five_point, max_relative_error, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub input_len: usize,
    pub horizon: usize,
    pub rep_dim: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub datasets: usize,
    pub step: f64,
    /// Inputs whose ReLU pre-activations come within `relu_margin · step`
    /// of zero are redrawn, so no stencil straddles a kink.
    pub relu_margin: f64,
    pub tolerance: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            input_len: 24,
            horizon: 12,
            rep_dim: 6,
            batches: 10,
            batch_size: 8,
            datasets: 3,
            step: 1e-4,
            relu_margin: 40.0,
            tolerance: 1e-4,
            lambda: 0.1,
            seed: 2024,
        }
    }
}

/// Worst relative error of one objective on one variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub variation: String,
    pub loss: String,
    pub max_relative_error: f64,
    pub worst_batch: usize,
    pub passed: bool,
}

pub const LOSSES: [&str; 5] = ["mse", "supcon", "ftcon", "pretrain_composite", "finetune_composite"];

fn variations(cfg: &GradcheckConfig) -> [(&'static str, ModelConfig); 4] {
    let base = ModelConfig {
        input_len: cfg.input_len,
        horizon: cfg.horizon,
        rep_dim: cfg.rep_dim,
        variation: Variation::Standard,
    };
    [
        ("standard", base),
        (
            "extra_contrastive_decoder",
            ModelConfig { variation: Variation::ExtraContrastiveDecoder { y_dim: cfg.rep_dim.max(2) - 1 }, ..base },
        ),
        (
            "no_prediction_decoder",
            ModelConfig { rep_dim: cfg.horizon, variation: Variation::NoPredictionDecoder, ..base },
        ),
        (
            "two_layer_mlp",
            ModelConfig { variation: Variation::TwoLayerMlp { hidden_dim: cfg.rep_dim + 1 }, ..base },
        ),
    ]
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
        .expect("shape matches length")
}

/// Compares the analytic parameter gradient of every objective against a
/// five-point central difference on random batches, for all variations.
pub fn gradient_suites(cfg: &GradcheckConfig) -> Result<Vec<SuiteResult>> {
    let kernel = SimilarityKernel::default();
    let (b, p) = (cfg.batch_size, cfg.datasets.max(1));
    let mut rng = Rng::new(cfg.seed);
    let mut results = Vec::new();
    for (vname, mc) in variations(cfg) {
        mc.validate()?;
        let mut worst = vec![(0.0f64, 0usize); LOSSES.len()];
        for batch in 0..cfg.batches {
            let mut model = ForecastModel::init(mc, &mut rng)?;
            // Perturb biases away from zero so every parameter matters.
            let theta: Vec<f64> = model.flat_parameters().iter().map(|v| v + 0.05 * rng.normal()).collect();
            model.set_flat_parameters(&theta)?;
            let x = loop {
                let x = random_matrix(b, mc.input_len, &mut rng);
                if model.forward(&x)?.relu_margin() > cfg.relu_margin * cfg.step {
                    break x;
                }
            };
            let y = random_matrix(b, mc.horizon, &mut rng);
            let labels: Vec<usize> = (0..b).map(|k| k % p).collect();
            let ref_x = random_matrix(4 * p, mc.input_len, &mut rng);
            let reference = reference_from_model(&model, &ref_x, (0..4 * p).map(|k| k % p).collect(), p, kernel)?;

            let at = |t: &[f64]| -> Result<ForecastModel> {
                let mut m = model.clone();
                m.set_flat_parameters(t)?;
                Ok(m)
            };
            let pass = model.forward(&x)?;
            let (_, d_mse) = mse_loss(&pass.predictions, &y)?;
            let sup = supcon_loss(&pass.contrastive, &labels, &kernel)?;
            let ft = ftcon_batch(&pass.contrastive, &reference)?;
            // Gates stay frozen at the unperturbed parameters, as in training.
            let gates = ft.gates.clone();
            let active = ft.output.active_anchors.max(1) as f64;

            type Objective<'a> = Box<dyn Fn(&[f64]) -> Result<f64> + 'a>;
            let cases: [(Vec<f64>, Objective); 5] = [
                (
                    model.backward(&pass, Some(&d_mse), None)?.0.flatten(),
                    Box::new(|t| Ok(mse_loss(&at(t)?.predict(&x)?, &y)?.0)),
                ),
                (
                    model.backward(&pass, None, Some(&sup.grad))?.0.flatten(),
                    Box::new(|t| {
                        let m = at(t)?;
                        Ok(supcon_loss(&m.contrastive_view(&m.encode(&x)?)?, &labels, &kernel)?.loss)
                    }),
                ),
                (
                    model.backward(&pass, None, Some(&ft.output.grad))?.0.flatten(),
                    Box::new(|t| {
                        let m = at(t)?;
                        let r = m.contrastive_view(&m.encode(&x)?)?;
                        let mut total = 0.0;
                        for (k, g) in gates.iter().enumerate() {
                            total += ftcon_loss(r.row(k), &reference, g)?.0;
                        }
                        Ok(total / active)
                    }),
                ),
                (
                    pretrain_objective(&model, &x, &y, &labels, cfg.lambda, &kernel)?.grads.flatten(),
                    Box::new(|t| Ok(pretrain_objective(&at(t)?, &x, &y, &labels, cfg.lambda, &kernel)?.total)),
                ),
                (
                    finetune_objective(&model, &x, &y, &reference, cfg.lambda)?.grads.flatten(),
                    Box::new(|t| Ok(finetune_objective(&at(t)?, &x, &y, &reference, cfg.lambda)?.total)),
                ),
            ];
            for (slot, (analytic, f)) in worst.iter_mut().zip(cases) {
                // The stencil needs a plain f64 closure; surface the first error afterwards.
                let mut failure = None;
                let numeric = finite_diff_grad_five_point(
                    |t| {
                        f(t).unwrap_or_else(|e| {
                            failure.get_or_insert(e);
                            f64::NAN
                        })
                    },
                    &theta,
                    cfg.step,
                );
                if let Some(e) = failure {
                    return Err(e);
                }
                let err = max_relative_error(&analytic, &numeric?);
                if err > slot.0 || batch == 0 {
                    *slot = (err.max(slot.0), batch);
                }
            }
        }
        for (loss, (err, batch)) in LOSSES.iter().zip(worst) {
            results.push(SuiteResult {
                variation: vname.into(),
                loss: (*loss).into(),
                max_relative_error: err,
                worst_batch: batch,
                passed: err < cfg.tolerance,
            });
        }
    }
    Ok(results)
}

pub fn suites_table(results: &[SuiteResult]) -> Table {
    let mut t = Table::new(
        "gradient check",
        ["variation", "loss", "max_rel_error", "worst_batch", "status"].map(String::from).to_vec(),
    );
    for r in results {
        t.push(vec![
            Cell::Text(r.variation.clone()),
            Cell::Text(r.loss.clone()),
            Cell::Text(format!("{:.2e}", r.max_relative_error)),
            Cell::Text(r.worst_batch.to_string()),
            Cell::Text(if r.passed { "pass" } else { "fail" }.into()),
        ]);
    }
    t
}
