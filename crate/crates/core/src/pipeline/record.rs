use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over steps of the composite objective.
    pub loss: f64,
    pub mse: f64,
    pub contrastive: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
    pub seconds: f64,
}

/// Per-epoch losses and the epoch whose weights were kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub stage: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub chosen_epoch: Option<usize>,
    pub checkpoint: Option<PathBuf>,
}

impl RunRecord {
    pub(crate) fn new(stage: &str, seed: u64) -> Self {
        Self {
            stage: stage.into(),
            seed,
            epochs: Vec::new(),
            chosen_epoch: None,
            checkpoint: None,
        }
    }

    /// One JSON object per epoch followed by a summary object.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let line = serde_json::json!({ "stage": self.stage, "kind": "epoch", "record": e });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "stage": self.stage,
            "kind": "summary",
            "seed": self.seed,
            "chosen_epoch": self.chosen_epoch,
            "checkpoint": self.checkpoint,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}
