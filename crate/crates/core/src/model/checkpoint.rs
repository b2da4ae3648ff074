//! Checkpoint files: one JSON header line (format tag, version, model config,
//! parameter manifest, normalization statistics, training metadata) followed
//! by one JSON array per parameter, in manifest order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{ForecastModel, ModelConfig};
use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FORMAT: &str = "simcon-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// `init`, `pretrain` or `finetune`.
    pub stage: String,
    /// Epoch the parameters come from (`None` for untrained weights).
    pub epoch: Option<usize>,
    pub seed: u64,
    pub lambda: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ForecastModel,
    /// Train-split statistics of each pretrain dataset, keyed by name.
    pub normalization: BTreeMap<String, NormalizationStats>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    parameters: Vec<ManifestEntry>,
    normalization: BTreeMap<String, NormalizationStats>,
    metadata: TrainingMetadata,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
}

impl Checkpoint {
    pub fn new(model: ForecastModel) -> Self {
        Self {
            model,
            normalization: BTreeMap::new(),
            metadata: TrainingMetadata {
                stage: "init".into(),
                ..TrainingMetadata::default()
            },
        }
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            config: self.model.config,
            parameters: self
                .model
                .parameters()
                .iter()
                .map(|(name, m)| ManifestEntry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
            normalization: self.normalization.clone(),
            metadata: self.metadata.clone(),
        };
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
        for (name, m) in self.model.parameters() {
            if !m.all_finite() {
                return Err(Error::Checkpoint(format!("parameter `{name}` is not finite")));
            }
            serde_json::to_writer(&mut w, m.as_slice()).map_err(|e| Error::Checkpoint(e.to_string()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("truncated file: missing {what}")))?
                .map_err(|e| Error::Checkpoint(e.to_string()))
        };
        let header: Header = serde_json::from_str(&next_line("header")?)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", header.format)));
        }
        if header.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                header.version
            )));
        }
        header.config.validate()?;
        let expected: Vec<ManifestEntry> = ForecastModel::manifest(&header.config)
            .into_iter()
            .map(|(name, (rows, cols))| ManifestEntry { name, rows, cols })
            .collect();
        if expected != header.parameters {
            return Err(Error::Checkpoint(
                "parameter manifest does not match the model configuration".into(),
            ));
        }

        let mut flat = Vec::with_capacity(header.config.parameter_count());
        for entry in &header.parameters {
            let values: Vec<f64> = serde_json::from_str(&next_line(&entry.name)?)
                .map_err(|e| Error::Checkpoint(format!("parameter `{}`: {e}", entry.name)))?;
            let m = Matrix::from_vec(entry.rows, entry.cols, values).map_err(|_| {
                Error::Checkpoint(format!("parameter `{}` has the wrong element count", entry.name))
            })?;
            flat.extend_from_slice(m.as_slice());
        }
        let mut model = ForecastModel::init(header.config, &mut crate::numerics::Rng::new(0))?;
        model.set_flat_parameters(&flat)?;
        Ok(Self {
            model,
            normalization: header.normalization,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variation;
    use crate::numerics::Rng;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            input_len: 12,
            horizon: 6,
            rep_dim: 3,
            variation: Variation::TwoLayerMlp { hidden_dim: 5 },
        };
        let mut ckpt = Checkpoint::new(ForecastModel::init(cfg, &mut Rng::new(21)).unwrap());
        ckpt.normalization.insert(
            "a".into(),
            NormalizationStats { mean: vec![0.1, -3.0], std: vec![1.0 / 3.0, 2.5] },
        );
        ckpt.metadata = TrainingMetadata { stage: "pretrain".into(), epoch: Some(4), seed: 9, lambda: 0.1, tau: 0.1 };
        ckpt
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let mut rng = Rng::new(1);
        let x = Matrix::from_vec(3, 12, (0..36).map(|_| rng.normal()).collect()).unwrap();
        let a = ckpt.model.predict(&x).unwrap();
        let b = back.model.predict(&x).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut buf = Vec::new();
        sample().to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        let err = Checkpoint::from_reader(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("version 7"), "{err}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut buf = Vec::new();
        sample().to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"input_len\":12", "\"input_len\":13", 1);
        assert!(matches!(Checkpoint::from_reader(text.as_bytes()), Err(Error::Checkpoint(_))));

        let mut buf = Vec::new();
        sample().to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(Checkpoint::from_reader(truncated.as_bytes()).is_err());
    }
}
