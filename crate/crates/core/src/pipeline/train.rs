use std::ops::Range;
use std::time::Instant;

use super::config::{FinetunePortion, ReferenceRefresh, TrainConfig};
use super::record::{EpochRecord, RunRecord};
use crate::data::{
    batches, dataset_windows, stack_inputs, stack_targets, PreparedDataset, PretrainCollection, StratifiedSampler,
    WindowSample,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_samples, TEST_BATCH};
use crate::loss::{
    finetune_objective, pretrain_objective, reference_from_model, ObjectiveOutput, ReferenceSet, SimilarityKernel,
};
use crate::model::{Checkpoint, ForecastModel, ModelConfig, TrainingMetadata};
use crate::numerics::{adam_step, AdamState, Rng};

// Independent RNG streams derived from the run seed.
const INIT_STREAM: u64 = 1;
const PRETRAIN_BATCH_STREAM: u64 = 2;
const FINETUNE_BATCH_STREAM: u64 = 3;
const REFERENCE_STREAM: u64 = 4;
pub(crate) const SIMILARITY_STREAM: u64 = 5;

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub record: RunRecord,
}

/// Tracks the weights with the lowest validation MSE, or the latest weights
/// when there is no validation data.
struct Selector {
    best: Option<(f64, usize, ForecastModel)>,
}

impl Selector {
    fn offer(&mut self, epoch: usize, val_mse: Option<f64>, model: &ForecastModel) {
        let score = val_mse.unwrap_or(f64::NEG_INFINITY);
        let better = match &self.best {
            None => true,
            Some((best, _, _)) => val_mse.is_none() || score < *best,
        };
        if better {
            self.best = Some((score, epoch, model.clone()));
        }
    }
}

fn step(model: &mut ForecastModel, adam: &mut AdamState, out: &ObjectiveOutput) -> Result<()> {
    if !out.total.is_finite() {
        return Err(Error::diverged("loss"));
    }
    adam_step(&mut model.parameters_mut(), &out.grads.0, adam)?;
    if !model.parameters().iter().all(|(_, m)| m.all_finite()) {
        return Err(Error::diverged("parameters"));
    }
    Ok(())
}

#[derive(Default)]
struct Running {
    loss: f64,
    mse: f64,
    contrastive: f64,
    steps: usize,
}

impl Running {
    fn add(&mut self, out: &ObjectiveOutput) {
        self.loss += out.total;
        self.mse += out.mse;
        self.contrastive += out.contrastive;
        self.steps += 1;
    }

    fn record(&self, epoch: usize, val: Option<(f64, f64)>, started: Instant) -> EpochRecord {
        let n = self.steps.max(1) as f64;
        EpochRecord {
            epoch,
            loss: self.loss / n,
            mse: self.mse / n,
            contrastive: self.contrastive / n,
            val_mse: val.map(|v| v.0),
            val_mae: val.map(|v| v.1),
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.5}"))
}

fn validate_on(model: &ForecastModel, validation: &[WindowSample]) -> Result<Option<(f64, f64)>> {
    if validation.is_empty() {
        return Ok(None);
    }
    evaluate_samples(model, validation, TEST_BATCH * 16).map(Some)
}

/// Jointly minimizes `MSE + λ·SupCon` over the collection with Adam. When
/// validation windows are given the epoch with the lowest validation MSE is
/// kept, otherwise the last epoch. With zero epochs the initial weights are
/// returned.
pub fn pretrain(
    collection: &PretrainCollection,
    validation: &[WindowSample],
    model_config: ModelConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainRun> {
    config.validate()?;
    model_config.validate()?;
    if collection.is_empty() {
        return Err(Error::InsufficientData("pretrain collection is empty".into()));
    }
    if let Some(s) = collection.samples.first() {
        if s.input().len() != model_config.input_len || s.target().len() != model_config.horizon {
            return Err(Error::Config(format!(
                "collection windows are ({}, {}) but the model expects ({}, {})",
                s.input().len(),
                s.target().len(),
                model_config.input_len,
                model_config.horizon
            )));
        }
    }
    let kernel = config.kernel();
    let mut root = Rng::new(seed);
    let mut model = ForecastModel::init(model_config, &mut root.fork(INIT_STREAM))?;
    let mut batch_rng = root.fork(PRETRAIN_BATCH_STREAM);
    let mut adam = AdamState::new(config.adam, &model.parameter_shapes());
    let batch_size = config.pretrain_batch.min(collection.len());

    let mut record = RunRecord::new("pretrain", seed);
    let mut selector = Selector { best: None };
    for epoch in 1..=config.pretrain_epochs {
        let started = Instant::now();
        let mut running = Running::default();
        for (s, batch) in batches(collection, batch_size, &mut batch_rng, config.pretrain_batching)?
            .into_iter()
            .enumerate()
        {
            let samples: Vec<&WindowSample> = batch.iter().map(|&i| &collection.samples[i]).collect();
            let labels: Vec<usize> = samples.iter().map(|w| w.dataset_label).collect();
            let out = pretrain_objective(
                &model,
                &stack_inputs(samples.iter().copied()),
                &stack_targets(samples.iter().copied()),
                &labels,
                config.lambda,
                &kernel,
            )
            .and_then(|out| step(&mut model, &mut adam, &out).map(|()| out))
            .map_err(|e| e.with_position(format!("pretrain epoch {epoch} batch {}", s + 1)))?;
            running.add(&out);
        }
        let val = validate_on(&model, validation)?;
        let rec = running.record(epoch, val, started);
        log::info!(
            "pretrain epoch {epoch}: loss {:.5} mse {:.5} supcon {:.5} val_mse {}",
            rec.loss,
            rec.mse,
            rec.contrastive,
            fmt_opt(rec.val_mse)
        );
        record.epochs.push(rec);
        selector.offer(epoch, val.map(|v| v.0), &model);
    }

    if let Some((_, epoch, best)) = selector.best {
        model = best;
        record.chosen_epoch = Some(epoch);
    }
    let mut checkpoint = Checkpoint::new(model);
    checkpoint.metadata = TrainingMetadata {
        stage: if record.chosen_epoch.is_some() { "pretrain" } else { "init" }.into(),
        epoch: record.chosen_epoch,
        seed,
        lambda: config.lambda,
        tau: config.temperature,
    };
    Ok(TrainRun { checkpoint, record })
}

/// Rows of the train split used for finetuning.
pub fn finetune_rows(train: Range<usize>, fraction: f64, portion: FinetunePortion) -> Range<usize> {
    let k = ((train.len() as f64) * fraction + 1e-9).floor() as usize;
    let k = k.min(train.len());
    match portion {
        FinetunePortion::First => train.start..train.start + k,
        FinetunePortion::Last => train.end - k..train.end,
    }
}

/// Encodes one stratified batch of the pool with the current weights.
pub fn draw_reference(
    model: &ForecastModel,
    pool: &PretrainCollection,
    sampler: &mut StratifiedSampler,
    rng: &mut Rng,
    kernel: SimilarityKernel,
) -> Result<ReferenceSet> {
    let idx = sampler.next_batch(rng);
    let samples = idx.iter().map(|&i| &pool.samples[i]);
    let labels = idx.iter().map(|&i| pool.samples[i].dataset_label).collect();
    reference_from_model(model, &stack_inputs(samples), labels, pool.num_datasets(), kernel)
}

/// Adapts a pretrained model to one target dataset by minimizing
/// `MSE + λ′·FTCon`, with references drawn stratified from the pretrain
/// collection and encoded with the current weights. Only train and
/// validation rows of the target are read. Zero epochs return the pretrained
/// checkpoint unchanged.
pub fn finetune(
    pretrained: &Checkpoint,
    target: &PreparedDataset,
    reference_pool: &PretrainCollection,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainRun> {
    config.validate()?;
    let mut record = RunRecord::new("finetune", seed);
    if config.finetune_epochs == 0 {
        return Ok(TrainRun {
            checkpoint: pretrained.clone(),
            record,
        });
    }
    let mc = pretrained.model.config;
    let features: Vec<usize> = (0..target.num_features()).collect();
    let rows = finetune_rows(target.split.train.clone(), config.finetune_fraction, config.finetune_portion);
    let windows = dataset_windows(&target.values, rows, &features, mc.input_len, mc.horizon, 1, 0)
        .map_err(|e| Error::InsufficientData(format!("finetune windows of {}: {e}", target.name)))?;
    let validation = dataset_windows(&target.values, target.split.val.clone(), &features, mc.input_len, mc.horizon, 1, 0)
        .map_err(|e| Error::InsufficientData(format!("validation windows of {}: {e}", target.name)))?;

    let kernel = config.kernel();
    let use_reference = config.finetune_lambda != 0.0;
    let mut sampler = if use_reference {
        Some(StratifiedSampler::new(reference_pool, config.reference_batch)?)
    } else {
        None
    };
    let mut root = Rng::new(seed);
    let mut batch_rng = root.fork(FINETUNE_BATCH_STREAM);
    let mut reference_rng = root.fork(REFERENCE_STREAM);
    let draw_reference = |model: &ForecastModel, sampler: &mut StratifiedSampler, rng: &mut Rng| {
        draw_reference(model, reference_pool, sampler, rng, kernel)
    };

    let mut model = pretrained.model.clone();
    let mut adam = AdamState::new(config.adam, &model.parameter_shapes());
    let batch_size = config.finetune_batch.min(windows.len());
    let mut selector = Selector { best: None };

    for epoch in 1..=config.finetune_epochs {
        let started = Instant::now();
        let mut running = Running::default();
        let mut epoch_reference = None;
        for (s, chunk) in batch_rng.permutation(windows.len()).chunks(batch_size).enumerate() {
            let position = || format!("finetune epoch {epoch} batch {}", s + 1);
            let samples: Vec<&WindowSample> = chunk.iter().map(|&i| &windows[i]).collect();
            let reference = match (&mut sampler, config.reference_refresh) {
                (None, _) => None,
                (Some(sm), ReferenceRefresh::PerStep) => Some(draw_reference(&model, sm, &mut reference_rng)?),
                (Some(sm), ReferenceRefresh::PerEpoch) => {
                    if epoch_reference.is_none() {
                        epoch_reference = Some(draw_reference(&model, sm, &mut reference_rng)?);
                    }
                    epoch_reference.clone()
                }
            };
            let inputs = stack_inputs(samples.iter().copied());
            let targets = stack_targets(samples.iter().copied());
            let out = match &reference {
                Some(r) => finetune_objective(&model, &inputs, &targets, r, config.finetune_lambda),
                None => plain_mse(&model, &inputs, &targets),
            }
            .and_then(|out| step(&mut model, &mut adam, &out).map(|()| out))
            .map_err(|e| e.with_position(position()))?;
            running.add(&out);
        }
        let val = validate_on(&model, &validation)?;
        let rec = running.record(epoch, val, started);
        log::info!(
            "finetune {} epoch {epoch}: loss {:.5} mse {:.5} ftcon {:.5} val_mse {}",
            target.name,
            rec.loss,
            rec.mse,
            rec.contrastive,
            fmt_opt(rec.val_mse)
        );
        record.epochs.push(rec);
        selector.offer(epoch, val.map(|v| v.0), &model);
    }

    let (_, epoch, best) = selector.best.expect("at least one candidate");
    record.chosen_epoch = Some(epoch);
    let mut checkpoint = pretrained.clone();
    checkpoint.model = best;
    checkpoint.normalization.insert(target.name.clone(), target.stats.clone());
    checkpoint.metadata = TrainingMetadata {
        stage: "finetune".into(),
        epoch: Some(epoch),
        seed,
        lambda: config.finetune_lambda,
        tau: config.temperature,
    };
    Ok(TrainRun { checkpoint, record })
}

fn plain_mse(model: &ForecastModel, inputs: &crate::numerics::Matrix, targets: &crate::numerics::Matrix) -> Result<ObjectiveOutput> {
    let pass = model.forward(inputs)?;
    let (mse, d_pred) = crate::loss::mse_loss(&pass.predictions, targets)?;
    let (grads, _) = model.backward(&pass, Some(&d_pred), None)?;
    Ok(ObjectiveOutput {
        total: mse,
        mse,
        contrastive: 0.0,
        grads,
    })
}

/// Pretrains one model per hidden width and keeps the one with the lowest
/// best validation MSE. Returns the run and the chosen width.
pub fn pretrain_width_search(
    collection: &PretrainCollection,
    validation: &[WindowSample],
    model_config: ModelConfig,
    widths: &[usize],
    config: &TrainConfig,
    seed: u64,
) -> Result<(TrainRun, usize)> {
    use crate::model::Variation;
    if !matches!(model_config.variation, Variation::TwoLayerMlp { .. }) {
        return Err(Error::Config("width search applies to the two-layer MLP only".into()));
    }
    if validation.is_empty() || widths.is_empty() {
        return Err(Error::Config("width search needs validation windows and at least one width".into()));
    }
    let mut best: Option<(f64, TrainRun, usize)> = None;
    for &w in widths {
        let cfg = ModelConfig {
            variation: Variation::TwoLayerMlp { hidden_dim: w },
            ..model_config
        };
        let run = pretrain(collection, validation, cfg, config, seed)?;
        let score = validate_on(&run.checkpoint.model, validation)?.map_or(f64::INFINITY, |v| v.0);
        log::info!("width {w}: validation mse {score:.5}");
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, run, w));
        }
    }
    let (_, run, w) = best.expect("non-empty widths");
    Ok((run, w))
}
