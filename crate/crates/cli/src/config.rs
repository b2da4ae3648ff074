//! The experiment file: a TOML tree naming every dataset, the architecture,
//! the training recipe and the evaluation protocol.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simcon::data::{ingest_csv, DatasetSampling, FeatureSelection, RawDataset, SplitSpec};
use simcon::model::Variation;
use simcon::pipeline::{ModelSpec, PretrainSource, TrainConfig};

use crate::error::CliError;

pub const CONFIG_ENV: &str = "SIMCON_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Checkpoints and run records land here. Relative to the config file.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub datasets: DatasetsSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            split: SplitSpec::default(),
            datasets: DatasetsSection::default(),
            model: ModelSection::default(),
            training: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetsSection {
    /// Base directory for relative dataset paths; defaults to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub pretrain: Vec<PretrainEntry>,
    #[serde(default)]
    pub targets: Vec<TargetEntry>,
}

/// One pretrain dataset and how it is sampled into the collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainEntry {
    pub name: String,
    pub path: PathBuf,
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

impl PretrainEntry {
    pub fn sampling(&self) -> DatasetSampling {
        DatasetSampling {
            stride: self.stride,
            repetition: self.repetition,
            features: self.features.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_input_len")]
    pub input_len: usize,
    /// Representation width; `O / 2` when absent (`O` without a prediction decoder).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep_dim: Option<usize>,
    #[serde(default = "standard")]
    pub variation: Variation,
    /// Hidden widths tried for the two-layer MLP, as multiples of the
    /// representation width. The best by validation MSE is kept.
    #[serde(default = "default_width_multipliers")]
    pub mlp_width_multipliers: Vec<usize>,
}

fn default_input_len() -> usize {
    96
}

fn standard() -> Variation {
    Variation::Standard
}

fn default_width_multipliers() -> Vec<usize> {
    vec![1, 2]
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            input_len: default_input_len(),
            rep_dim: None,
            variation: standard(),
            mlp_width_multipliers: default_width_multipliers(),
        }
    }
}

impl ModelSection {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            input_len: self.input_len,
            rep_dim: self.rep_dim,
            variation: self.variation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    #[default]
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    /// Baseline CSV for ratio reports; the bundled table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<PathBuf>,
    /// Which split of each scored dataset feeds the similarity report.
    #[serde(default)]
    pub similarity_split: SplitName,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_tau_grid")]
    pub tau_grid: Vec<f64>,
}

fn default_horizons() -> Vec<usize> {
    vec![96, 192, 336, 720]
}

fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.5, 1.0]
}

fn default_tau_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.5, 1.0, 5.0]
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            horizons: default_horizons(),
            baselines: None,
            similarity_split: SplitName::default(),
            lambda_grid: default_lambda_grid(),
            tau_grid: default_tau_grid(),
        }
    }
}

/// A parsed config together with the directory its relative paths hang off.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config tree is always representable")
    }

    /// Every check that needs no file access.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: simcon::Error| CliError::Config(e.to_string());
        self.split.validate().map_err(cfg)?;
        self.training.validate().map_err(cfg)?;
        if self.eval.horizons.is_empty() {
            return Err(CliError::Config("eval.horizons must not be empty".into()));
        }
        for &h in &self.eval.horizons {
            self.model.spec().for_horizon(h).map_err(|e| CliError::Config(format!("model at horizon {h}: {e}")))?;
        }
        if self.model.mlp_width_multipliers.is_empty() || self.model.mlp_width_multipliers.contains(&0) {
            return Err(CliError::Config("model.mlp_width_multipliers must be non-empty positive integers".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.datasets.pretrain {
            p.sampling()
                .validate()
                .map_err(|e| CliError::Config(format!("datasets.pretrain `{}`: {e}", p.name)))?;
            if !names.insert(p.name.as_str()) {
                return Err(CliError::Config(format!("datasets.pretrain: `{}` listed twice", p.name)));
            }
        }
        let mut targets = std::collections::BTreeSet::new();
        for t in &self.datasets.targets {
            if !targets.insert(t.name.as_str()) {
                return Err(CliError::Config(format!("datasets.targets: `{}` listed twice", t.name)));
            }
        }
        for (key, grid) in [("eval.lambda_grid", &self.eval.lambda_grid), ("eval.tau_grid", &self.eval.tau_grid)] {
            if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(CliError::Config(format!("{key} must be non-empty finite non-negative values")));
            }
        }
        Ok(())
    }
}

impl LoadedConfig {
    /// Reads `path`, or the file named by `SIMCON_CONFIG` when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(CONFIG_ENV)
                .map(PathBuf::from)
                .ok_or_else(|| CliError::Config(format!("no config given: pass --config or set {CONFIG_ENV}")))?,
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config = ExperimentConfig::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        match &self.config.datasets.root {
            Some(root) if root.is_absolute() => root.join(p),
            Some(root) => self.base_dir.join(root).join(p),
            None => self.base_dir.join(p),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        if self.config.output_dir.is_absolute() {
            self.config.output_dir.clone()
        } else {
            self.base_dir.join(&self.config.output_dir)
        }
    }

    pub fn baselines_path(&self) -> Option<PathBuf> {
        self.config.eval.baselines.as_deref().map(|p| self.resolve(p))
    }

    pub fn pretrain_sources(&self) -> Result<Vec<PretrainSource>, CliError> {
        if self.config.datasets.pretrain.is_empty() {
            return Err(CliError::Config("datasets.pretrain is empty".into()));
        }
        self.config
            .datasets
            .pretrain
            .iter()
            .map(|p| {
                Ok(PretrainSource {
                    dataset: ingest_csv(self.resolve(&p.path), &p.name)?,
                    sampling: p.sampling(),
                })
            })
            .collect()
    }

    /// Finetune/evaluation datasets; the pretrain datasets when none are listed.
    pub fn targets(&self) -> Result<Vec<RawDataset>, CliError> {
        if self.config.datasets.targets.is_empty() {
            return Ok(self.pretrain_sources()?.into_iter().map(|s| s.dataset).collect());
        }
        self.config
            .datasets
            .targets
            .iter()
            .map(|t| Ok(ingest_csv(self.resolve(&t.path), &t.name)?))
            .collect()
    }

    pub fn target(&self, name: &str) -> Result<RawDataset, CliError> {
        let entry_path = self
            .config
            .datasets
            .targets
            .iter()
            .map(|t| (&t.name, &t.path))
            .chain(self.config.datasets.pretrain.iter().map(|p| (&p.name, &p.path)))
            .find(|(n, _)| n.as_str() == name)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| CliError::Config(format!("target `{name}` is not listed under datasets")))?;
        Ok(ingest_csv(self.resolve(&entry_path), name)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.training.lambda, 0.1);
        assert_eq!(c.training.temperature, 0.1);
        assert_eq!(c.training.pretrain_epochs, 10);
        assert_eq!(c.training.pretrain_batch, 512);
        assert_eq!(c.eval.horizons, vec![96, 192, 336, 720]);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for text in ["bogus = 1", "[training]\nlamda = 0.2", "[model]\nwidth = 3", "[eval]\nhorizon = [96]"] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{text}");
        }
        let err = ExperimentConfig::from_toml("[[datasets.pretrain]]\nname='a'\npath='a.csv'\nstrid=2").unwrap_err();
        assert!(err.to_string().contains("strid"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = ExperimentConfig::from_toml("[training]\ntemperature = 0.0").unwrap_err();
        assert!(err.to_string().contains("temperature"), "{err}");
        let err = ExperimentConfig::from_toml("[eval]\nhorizons = []").unwrap_err();
        assert!(err.to_string().contains("eval.horizons"), "{err}");
        let dup = "[[datasets.pretrain]]\nname='a'\npath='a.csv'\n[[datasets.pretrain]]\nname='a'\npath='b.csv'";
        assert!(ExperimentConfig::from_toml(dup).unwrap_err().to_string().contains("twice"));
    }

    #[test]
    fn round_trip_preserves_everything() {
        let mut c = ExperimentConfig::default();
        c.model.variation = Variation::TwoLayerMlp { hidden_dim: 64 };
        c.datasets.pretrain.push(PretrainEntry {
            name: "e".into(),
            path: "e.csv".into(),
            stride: 2,
            repetition: 1,
            features: FeatureSelection::EquallySpaced { count: 27 },
        });
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn relative_paths_hang_off_the_config_directory() {
        let loaded = LoadedConfig {
            config: ExperimentConfig { datasets: DatasetsSection { root: Some("data".into()), ..Default::default() }, ..Default::default() },
            base_dir: PathBuf::from("/exp"),
        };
        assert_eq!(loaded.resolve(Path::new("a.csv")), PathBuf::from("/exp/data/a.csv"));
        assert_eq!(loaded.resolve(Path::new("/abs/a.csv")), PathBuf::from("/abs/a.csv"));
        assert_eq!(loaded.output_dir(), PathBuf::from("/exp/runs"));
    }
}
