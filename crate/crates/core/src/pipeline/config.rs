use serde::{Deserialize, Serialize};

use crate::data::BatchMode;
use crate::error::{Error, Result};
use crate::loss::{KernelKind, SimilarityKernel};
use crate::model::{ModelConfig, Variation};
use crate::numerics::AdamConfig;

/// Which end of the train split supplies finetune windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinetunePortion {
    #[default]
    First,
    Last,
}

/// How often finetuning draws and re-encodes a reference batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceRefresh {
    #[default]
    PerStep,
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the contrastive term during pretraining.
    pub lambda: f64,
    /// Weight of the contrastive term during finetuning.
    pub finetune_lambda: f64,
    pub temperature: f64,
    pub epsilon: f64,
    pub kernel: KernelKind,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub pretrain_batch: usize,
    pub pretrain_batching: BatchMode,
    pub finetune_batch: usize,
    pub reference_batch: usize,
    /// Fraction of the target train split used for finetuning.
    pub finetune_fraction: f64,
    pub finetune_portion: FinetunePortion,
    pub reference_refresh: ReferenceRefresh,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            finetune_lambda: 0.1,
            temperature: 0.1,
            epsilon: 1e-8,
            kernel: KernelKind::Cosine,
            pretrain_epochs: 10,
            finetune_epochs: 10,
            pretrain_batch: 512,
            pretrain_batching: BatchMode::Shuffled,
            finetune_batch: 32,
            reference_batch: 512,
            finetune_fraction: 0.5,
            finetune_portion: FinetunePortion::First,
            reference_refresh: ReferenceRefresh::PerStep,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn kernel(&self) -> SimilarityKernel {
        SimilarityKernel {
            kind: self.kernel,
            temperature: self.temperature,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().validate()?;
        self.adam.validate()?;
        for (name, v) in [("lambda", self.lambda), ("finetune_lambda", self.finetune_lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        for (name, v) in [
            ("pretrain_batch", self.pretrain_batch),
            ("finetune_batch", self.finetune_batch),
            ("reference_batch", self.reference_batch),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.finetune_fraction > 0.0 && self.finetune_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "finetune_fraction must be in (0, 1], got {}",
                self.finetune_fraction
            )));
        }
        Ok(())
    }
}

/// Architecture independent of the horizon, so one spec serves a list of
/// horizons. `rep_dim` defaults to `O / 2` (or `O` without a prediction
/// decoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_input_len")]
    pub input_len: usize,
    #[serde(default)]
    pub rep_dim: Option<usize>,
    #[serde(default = "standard")]
    pub variation: Variation,
}

fn default_input_len() -> usize {
    96
}

fn standard() -> Variation {
    Variation::Standard
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            input_len: default_input_len(),
            rep_dim: None,
            variation: Variation::Standard,
        }
    }
}

impl ModelSpec {
    pub fn for_horizon(&self, horizon: usize) -> Result<ModelConfig> {
        let rep_dim = match (self.rep_dim, self.variation) {
            (Some(h), _) => h,
            (None, Variation::NoPredictionDecoder) => horizon,
            (None, _) => (horizon / 2).max(1),
        };
        let config = ModelConfig {
            input_len: self.input_len,
            horizon,
            rep_dim,
            variation: self.variation,
        };
        config.validate()?;
        Ok(config)
    }
}
