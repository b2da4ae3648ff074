use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, TrainConfig};
use super::train::{draw_reference, pretrain, SIMILARITY_STREAM};
use crate::data::{
    build_collection, dataset_windows, CollectionSource, DatasetSampling, NormalizationStats, PreparedDataset,
    PretrainCollection, RawDataset, SplitSpec, StratifiedSampler, WindowSample,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, similarity_matrix, Cell, EvalResult, SimilarityMatrix, Table, TEST_BATCH};
use crate::loss::ReferenceSet;
use crate::model::ForecastModel;
use crate::numerics::Rng;

#[derive(Debug, Clone)]
pub struct PretrainSource {
    pub dataset: RawDataset,
    pub sampling: DatasetSampling,
}

/// Normalized pretrain datasets, their train-split collection, and
/// validation windows drawn from their validation splits.
#[derive(Debug, Clone)]
pub struct PreparedPretrain {
    pub datasets: Vec<PreparedDataset>,
    pub collection: PretrainCollection,
    pub validation: Vec<WindowSample>,
}

impl PreparedPretrain {
    pub fn normalization(&self) -> BTreeMap<String, NormalizationStats> {
        self.datasets.iter().map(|d| (d.name.clone(), d.stats.clone())).collect()
    }

    /// Test-split windows of each pretrain dataset (selected features only).
    pub fn test_windows(&self, sources: &[PretrainSource], input_len: usize, horizon: usize) -> Result<Vec<(String, Vec<WindowSample>)>> {
        self.split_windows(sources, input_len, horizon, |d| d.split.test.clone())
    }

    fn split_windows(
        &self,
        sources: &[PretrainSource],
        input_len: usize,
        horizon: usize,
        range: impl Fn(&PreparedDataset) -> std::ops::Range<usize>,
    ) -> Result<Vec<(String, Vec<WindowSample>)>> {
        self.datasets
            .iter()
            .zip(sources)
            .enumerate()
            .map(|(label, (d, src))| {
                let features = src.sampling.features.resolve(d.num_features())?;
                let w = dataset_windows(&d.values, range(d), &features, input_len, horizon, 1, label)?;
                Ok((d.name.clone(), w))
            })
            .collect()
    }
}

pub fn prepare_pretrain(
    sources: &[PretrainSource],
    split: &SplitSpec,
    input_len: usize,
    horizon: usize,
) -> Result<PreparedPretrain> {
    let mut names = std::collections::BTreeSet::new();
    for s in sources {
        if !names.insert(s.dataset.name.as_str()) {
            return Err(Error::Config(format!("pretrain dataset `{}` listed twice", s.dataset.name)));
        }
    }
    let datasets: Vec<PreparedDataset> = sources
        .iter()
        .map(|s| PreparedDataset::prepare(&s.dataset, split, input_len + horizon))
        .collect::<Result<_>>()?;
    let collection_sources: Vec<CollectionSource> = datasets
        .iter()
        .zip(sources)
        .map(|(d, s)| CollectionSource {
            name: &d.name,
            values: &d.values,
            rows: d.split.train.clone(),
            sampling: &s.sampling,
        })
        .collect();
    let collection = build_collection(&collection_sources, input_len, horizon)?;
    let mut prepared = PreparedPretrain {
        datasets,
        collection,
        validation: Vec::new(),
    };
    prepared.validation = prepared
        .split_windows(sources, input_len, horizon, |d| d.split.val.clone())?
        .into_iter()
        .flat_map(|(_, w)| w)
        .collect();
    Ok(prepared)
}

/// One stratified reference batch of `config.reference_batch` samples from
/// the pool, encoded with `model`. The draw depends only on `seed`.
pub fn stratified_reference(
    model: &ForecastModel,
    pool: &PretrainCollection,
    config: &TrainConfig,
    seed: u64,
) -> Result<ReferenceSet> {
    let mut sampler = StratifiedSampler::new(pool, config.reference_batch)?;
    let mut rng = Rng::new(seed).fork(SIMILARITY_STREAM);
    draw_reference(model, pool, &mut sampler, &mut rng, config.kernel())
}

/// Average similarity of each group's windows to every pretrain dataset,
/// against one stratified reference batch.
pub fn similarity_report(
    model: &ForecastModel,
    pool: &PretrainCollection,
    groups: &[(String, Vec<WindowSample>)],
    config: &TrainConfig,
    seed: u64,
) -> Result<SimilarityMatrix> {
    let reference = stratified_reference(model, pool, config, seed)?;
    similarity_matrix(model, &reference, &pool.names, groups, config.reference_batch)
}

/// Test-split MSE/MAE of `model` on each dataset.
pub fn zero_shot(model: &ForecastModel, targets: &[PreparedDataset]) -> Result<Vec<EvalResult>> {
    targets
        .iter()
        .map(|t| evaluate(model, t, t.split.test.clone(), TEST_BATCH))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    Temperature,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "tau" | "temperature" => Ok(Self::Temperature),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (lambda, tau)"))),
        }
    }
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Temperature => "tau",
        }
    }

    fn apply(self, base: &TrainConfig, value: f64) -> TrainConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::Lambda => c.lambda = value,
            SweepAxis::Temperature => c.temperature = value,
        }
        c
    }
}

/// Zero-shot test errors per grid value and dataset, averaged over horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub datasets: Vec<String>,
    pub horizons: Vec<usize>,
    /// `mse[v][d]`.
    pub mse: Vec<Vec<f64>>,
    pub mae: Vec<Vec<f64>>,
}

impl SweepTable {
    /// An MSE block and an MAE block; rows are grid values, columns datasets.
    pub fn to_tables(&self) -> [Table; 2] {
        let block = |metric: &str, grid: &[Vec<f64>]| {
            let mut header = vec![self.axis.label().to_owned()];
            header.extend(self.datasets.iter().cloned());
            let mut t = Table::new(format!("{metric} by {}", self.axis.label()), header);
            for (v, row) in self.values.iter().zip(grid) {
                let mut cells = vec![Cell::Text(v.to_string())];
                cells.extend(row.iter().map(|&x| Cell::Number(x)));
                t.push(cells);
            }
            t
        };
        [block("MSE", &self.mse), block("MAE", &self.mae)]
    }
}

/// Pretrains once per (grid value, horizon) and evaluates every target's
/// test split zero-shot.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    sources: &[PretrainSource],
    targets: &[RawDataset],
    split: &SplitSpec,
    model: &ModelSpec,
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    horizons: &[usize],
    seed: u64,
) -> Result<SweepTable> {
    if values.is_empty() || horizons.is_empty() || targets.is_empty() {
        return Err(Error::Config("sweep needs grid values, horizons and target datasets".into()));
    }
    let nd = targets.len();
    let mut mse = vec![vec![0.0; nd]; values.len()];
    let mut mae = vec![vec![0.0; nd]; values.len()];
    for &horizon in horizons {
        let mc = model.for_horizon(horizon)?;
        let prepared = prepare_pretrain(sources, split, mc.input_len, horizon)?;
        let prepared_targets: Vec<PreparedDataset> = targets
            .iter()
            .map(|t| PreparedDataset::prepare(t, split, mc.input_len + horizon))
            .collect::<Result<_>>()?;
        for (vi, &v) in values.iter().enumerate() {
            let cfg = axis.apply(base, v);
            log::info!("sweep {}={v} horizon {horizon}", axis.label());
            let run = pretrain(&prepared.collection, &prepared.validation, mc, &cfg, seed)?;
            for (di, r) in zero_shot(&run.checkpoint.model, &prepared_targets)?.into_iter().enumerate() {
                mse[vi][di] += r.mse / horizons.len() as f64;
                mae[vi][di] += r.mae / horizons.len() as f64;
            }
        }
    }
    Ok(SweepTable {
        axis,
        values: values.to_vec(),
        datasets: targets.iter().map(|t| t.name.clone()).collect(),
        horizons: horizons.to_vec(),
        mse,
        mae,
    })
}
