use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::window::{dataset_windows, WindowSample};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Which feature columns of a dataset enter the pretrain collection.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "FeatureSelectionRepr", into = "FeatureSelectionRepr")]
pub enum FeatureSelection {
    #[default]
    All,
    Indices(Vec<usize>),
    /// `count` indices at `⌊i·d/count⌋` for `i in 0..count`.
    EquallySpaced { count: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeatureSelectionRepr {
    Keyword(String),
    Indices(Vec<usize>),
    Rule { count: usize, rule: String },
}

impl TryFrom<FeatureSelectionRepr> for FeatureSelection {
    type Error = String;

    fn try_from(repr: FeatureSelectionRepr) -> Result<Self, String> {
        match repr {
            FeatureSelectionRepr::Keyword(k) if k == "all" => Ok(FeatureSelection::All),
            FeatureSelectionRepr::Keyword(k) => Err(format!("unknown feature keyword {k:?}")),
            FeatureSelectionRepr::Indices(v) => Ok(FeatureSelection::Indices(v)),
            FeatureSelectionRepr::Rule { count, rule } if rule == "equally_spaced" => {
                Ok(FeatureSelection::EquallySpaced { count })
            }
            FeatureSelectionRepr::Rule { rule, .. } => {
                Err(format!("unknown feature rule {rule:?}"))
            }
        }
    }
}

impl From<FeatureSelection> for FeatureSelectionRepr {
    fn from(sel: FeatureSelection) -> Self {
        match sel {
            FeatureSelection::All => FeatureSelectionRepr::Keyword("all".into()),
            FeatureSelection::Indices(v) => FeatureSelectionRepr::Indices(v),
            FeatureSelection::EquallySpaced { count } => FeatureSelectionRepr::Rule {
                count,
                rule: "equally_spaced".into(),
            },
        }
    }
}

impl FeatureSelection {
    /// Concrete, strictly increasing feature indices for a dataset with `d` features.
    pub fn resolve(&self, d: usize) -> Result<Vec<usize>> {
        let indices = match self {
            FeatureSelection::All => (0..d).collect(),
            FeatureSelection::Indices(v) => v.clone(),
            FeatureSelection::EquallySpaced { count } => {
                if *count == 0 || *count > d {
                    return Err(Error::Config(format!(
                        "cannot pick {count} equally spaced features out of {d}"
                    )));
                }
                equally_spaced(d, *count)
            }
        };
        if indices.is_empty() {
            return Err(Error::Config("feature subset is empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= d) {
            return Err(Error::Config(format!(
                "feature index {bad} out of range for {d} features"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "feature indices must be strictly increasing, got {indices:?}"
            )));
        }
        Ok(indices)
    }
}

/// `⌊i·n/k⌋` for `i in 0..k`.
pub fn equally_spaced(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| i * n / k).collect()
}

/// Sampling recipe for one pretrain dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSampling {
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub repetition: usize,
    #[serde(default)]
    pub features: FeatureSelection,
}

fn one() -> usize {
    1
}

impl Default for DatasetSampling {
    fn default() -> Self {
        Self {
            stride: 1,
            repetition: 1,
            features: FeatureSelection::All,
        }
    }
}

impl DatasetSampling {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.repetition == 0 {
            return Err(Error::Config(format!(
                "stride and repetition must be at least 1, got {} and {}",
                self.stride, self.repetition
            )));
        }
        Ok(())
    }
}

/// One input to `build_collection`: normalized values, the rows to window
/// (the train split), and the sampling recipe.
#[derive(Debug, Clone)]
pub struct CollectionSource<'a> {
    pub name: &'a str,
    pub values: &'a Matrix,
    pub rows: Range<usize>,
    pub sampling: &'a DatasetSampling,
}

#[derive(Debug, Clone)]
pub struct PretrainCollection {
    pub samples: Vec<WindowSample>,
    pub names: Vec<String>,
    pub per_dataset_counts: Vec<usize>,
}

impl PretrainCollection {
    pub fn num_datasets(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample indices grouped by dataset label.
    pub fn indices_by_label(&self) -> Vec<Vec<usize>> {
        let mut by_label = vec![Vec::new(); self.num_datasets()];
        for (i, s) in self.samples.iter().enumerate() {
            by_label[s.dataset_label].push(i);
        }
        by_label
    }
}

/// Windows each selected feature of every source with its stride, repeats
/// the resulting list `repetition` times, and labels samples by source order.
pub fn build_collection(
    sources: &[CollectionSource<'_>],
    input_len: usize,
    horizon: usize,
) -> Result<PretrainCollection> {
    if sources.is_empty() {
        return Err(Error::Config("pretrain collection needs at least one dataset".into()));
    }
    let mut samples = Vec::new();
    let mut names = Vec::with_capacity(sources.len());
    let mut per_dataset_counts = Vec::with_capacity(sources.len());
    for (label, src) in sources.iter().enumerate() {
        src.sampling.validate()?;
        let features = src
            .sampling
            .features
            .resolve(src.values.cols())
            .map_err(|e| Error::Config(format!("dataset {}: {e}", src.name)))?;
        let once = dataset_windows(
            src.values,
            src.rows.clone(),
            &features,
            input_len,
            horizon,
            src.sampling.stride,
            label,
        )
        .map_err(|e| match e {
            Error::InsufficientData(m) => Error::InsufficientData(format!("dataset {}: {m}", src.name)),
            other => other,
        })?;
        per_dataset_counts.push(once.len() * src.sampling.repetition);
        for _ in 0..src.sampling.repetition {
            samples.extend(once.iter().cloned());
        }
        names.push(src.name.to_owned());
    }
    Ok(PretrainCollection {
        samples,
        names,
        per_dataset_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// A random permutation of the whole collection cut into batches.
    Shuffled,
    /// `⌊batch_size / P⌋` samples of every label per batch.
    Stratified,
}

/// Batches of sample indices covering one epoch.
///
/// Shuffled batches cover every sample once; the final batch may be short.
/// Stratified batches stop when the smallest label pool runs out.
pub fn batches(
    collection: &PretrainCollection,
    batch_size: usize,
    rng: &mut Rng,
    mode: BatchMode,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > collection.len() {
        return Err(Error::Config(format!(
            "batch size {batch_size} must be in 1..={}",
            collection.len()
        )));
    }
    match mode {
        BatchMode::Shuffled => {
            let perm = rng.permutation(collection.len());
            Ok(perm.chunks(batch_size).map(<[usize]>::to_vec).collect())
        }
        BatchMode::Stratified => {
            let mut sampler = StratifiedSampler::new(collection, batch_size)?;
            let n = sampler.pools.iter().map(|p| p.len()).min().unwrap_or(0) / sampler.per_label;
            Ok((0..n).map(|_| sampler.next_batch(rng)).collect())
        }
    }
}

/// Endless stratified reference batches. Each label's pool is drawn without
/// replacement and reshuffled once exhausted.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    pools: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    per_label: usize,
}

impl StratifiedSampler {
    pub fn new(collection: &PretrainCollection, batch_size: usize) -> Result<Self> {
        let pools = collection.indices_by_label();
        let p = pools.len();
        let per_label = batch_size / p.max(1);
        if per_label == 0 {
            return Err(Error::Config(format!(
                "stratified batch size {batch_size} is smaller than the number of datasets {p}"
            )));
        }
        if let Some((label, pool)) = pools.iter().enumerate().find(|(_, pool)| pool.len() < per_label) {
            return Err(Error::InsufficientData(format!(
                "dataset label {label} has {} samples, fewer than {per_label} per stratified batch",
                pool.len()
            )));
        }
        Ok(Self {
            cursors: pools.iter().map(Vec::len).collect(),
            pools,
            per_label,
        })
    }

    pub fn per_label(&self) -> usize {
        self.per_label
    }

    /// Actual batch size, `P · ⌊batch_size / P⌋`.
    pub fn batch_size(&self) -> usize {
        self.per_label * self.pools.len()
    }

    pub fn next_batch(&mut self, rng: &mut Rng) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size());
        for (pool, cursor) in self.pools.iter_mut().zip(self.cursors.iter_mut()) {
            if *cursor + self.per_label > pool.len() {
                rng.shuffle(pool);
                *cursor = 0;
            }
            batch.extend_from_slice(&pool[*cursor..*cursor + self.per_label]);
            *cursor += self.per_label;
        }
        batch
    }
}
