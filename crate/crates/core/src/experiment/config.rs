use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{DataSource, GapShape};
use crate::error::{Error, Result};
use crate::odesolve::SolverOptions;
use crate::pyramid::SplitRule;
use crate::recurrent::{TargetMode, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rnn,
    OdeRnn,
    Seqlink,
    SeqlinkUnified,
    SeqlinkMost,
    SeqlinkLeast,
}

impl ModelKind {
    pub const ABLATIONS: [ModelKind; 4] =
        [ModelKind::Seqlink, ModelKind::SeqlinkUnified, ModelKind::SeqlinkMost, ModelKind::SeqlinkLeast];

    pub fn uses_bank(self) -> bool {
        !matches!(self, ModelKind::Rnn | ModelKind::OdeRnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::OdeRnn => "ode_rnn",
            ModelKind::Seqlink => "seqlink",
            ModelKind::SeqlinkUnified => "seqlink_unified",
            ModelKind::SeqlinkMost => "seqlink_most",
            ModelKind::SeqlinkLeast => "seqlink_least",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string())).map_err(|_| Error::usage(format!("unknown model `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// CSV file for `source = csv`.
    pub path: Option<PathBuf>,
    /// Read the CSV `target` column as binary labels.
    pub label_target: bool,
    pub samples: usize,
    pub length: usize,
    pub dim: usize,
    /// Share of time points removed from every sample.
    pub sparsity: f64,
    pub gap_shape: GapShape,
    /// Seeds generation, sparsification and the split; fixed across model seeds.
    pub seed: u64,
    pub train_fraction: f64,
    pub normalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Width `H_u` of the auto-encoder latent space.
    pub latent: usize,
    /// Hidden width `H` of the forecasting models.
    pub hidden: usize,
    pub ode_units: usize,
    /// Pyramid levels `L`.
    pub levels: usize,
    pub embed_width: usize,
    pub ae_epochs: usize,
    pub attention_epochs: usize,
    pub removal_fraction: f64,
}

/// Where the bank and pyramids come from for the Link-ODE variants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stages {
    /// Skip auto-encoder training and load `bank_path`.
    pub skip_autoencoder: bool,
    /// Skip attention fitting and load `pyramid_path`.
    pub skip_pyramid: bool,
    pub bank_path: Option<PathBuf>,
    pub pyramid_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: ModelKind,
    pub solver: SolverOptions,
    pub hyper: Hyper,
    pub seeds: Vec<u64>,
    pub task: Task,
    pub target_mode: TargetMode,
    pub split_rule: SplitRule,
    pub stages: Stages,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// Full-size settings: 1000 samples, 200 epochs, batch 200.
    pub fn paper() -> Self {
        Self {
            name: "paper".into(),
            dataset: DatasetSpec {
                source: DataSource::Synthetic,
                path: None,
                label_target: false,
                samples: 1000,
                length: 100,
                dim: 1,
                sparsity: 0.4,
                gap_shape: GapShape::Contiguous,
                seed: 2024,
                train_fraction: 0.8,
                normalize: true,
            },
            model: ModelKind::Seqlink,
            solver: SolverOptions::default(),
            hyper: Hyper {
                lr: 0.01,
                epochs: 200,
                batch_size: 200,
                latent: 10,
                hidden: 10,
                ode_units: 100,
                levels: 5,
                embed_width: 10,
                ae_epochs: 200,
                attention_epochs: 20,
                removal_fraction: 0.2,
            },
            seeds: vec![0, 1, 2],
            task: Task::Regression,
            target_mode: TargetMode::PerStep,
            split_rule: SplitRule::RemainingMean,
            stages: Stages::default(),
        }
    }

    /// Desk-scale settings: 100 samples, 30 epochs, batch 20.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        c.name = "desk".into();
        c.dataset.samples = 100;
        c.hyper.epochs = 30;
        c.hyper.batch_size = 20;
        c.hyper.ae_epochs = 30;
        c.hyper.attention_epochs = 10;
        c
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::usage(format!("unknown profile `{other}` (expected paper or desk)"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Applies `key=value` overrides; keys are dotted paths and values are
    /// parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| Error::usage(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut v;
            for part in key.split('.') {
                slot = slot
                    .get_mut(part)
                    .ok_or_else(|| Error::usage(format!("unknown config key `{key}`")))?;
            }
            *slot = value;
        }
        serde_json::from_value(v).map_err(|e| Error::usage(format!("invalid override: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::usage("at least one seed is required"));
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return Err(Error::usage("train_fraction must lie in (0, 1)"));
        }
        if self.hyper.levels == 0 || self.hyper.batch_size == 0 || self.hyper.hidden == 0 || self.hyper.latent == 0 {
            return Err(Error::usage("levels, batch_size, hidden and latent must be positive"));
        }
        if self.dataset.source == DataSource::Csv && self.dataset.path.is_none() {
            return Err(Error::usage("csv dataset needs dataset.path"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// `{name}-{model}-{first 12 hash chars}`.
    pub fn run_id(&self) -> String {
        format!("{}-{}-{}", self.name, self.model.name(), &self.hash()[..12])
    }
}

/// `SEQLINK_ARTIFACT_DIR`, or `artifacts` under the working directory.
pub fn artifact_root() -> PathBuf {
    std::env::var_os("SEQLINK_ARTIFACT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("artifacts"))
}
