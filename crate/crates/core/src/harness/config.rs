use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::games::ckbg::ConditionCount;
use crate::games::mf::MfShape;
use crate::games::{GameId, JudgeMode, Method};
use crate::generation::GeneratorConfig;
use crate::seed::fingerprint;
use crate::selection::{SelectionPolicy, DEFAULT_EPSILON};
use crate::{Error, Result};

/// Where the method agent's beliefs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorChoice {
    Oracle,
    Keyword,
    Random,
    /// The estimation service; an unset endpoint falls back to `EST_ENDPOINT`.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        retries: Option<u32>,
        #[serde(default)]
        timeout_ms: Option<u64>,
    },
}

/// Scenario source. Without a path, scenarios are generated from the
/// experiment seed (or `seed` when set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_condition_count")]
    pub condition_count: ConditionCount,
    #[serde(default)]
    pub mf_shape: MfShape,
}

fn default_condition_count() -> ConditionCount {
    ConditionCount::Fixed(3)
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            seed: None,
            condition_count: default_condition_count(),
            mf_shape: MfShape::default(),
        }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_repetitions() -> usize {
    3
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameId,
    pub method: Method,
    /// Ignored by methods that read no beliefs; forced to `random` for
    /// `RAND_BELIEF`. Defaults to the oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorChoice>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<SelectionPolicy>,
    pub n_episodes: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    /// Game default when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turns: Option<usize>,
    #[serde(default)]
    pub judge: JudgeMode,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    /// Reads a JSON or TOML document, chosen by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&raw)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => serde_json::from_str(&raw)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.max_turns == Some(0) {
            return Err(Error::Config("max_turns must be at least 1".into()));
        }
        if let Some(SelectionPolicy::UniformK(0)) = self.policy {
            return Err(Error::Config("uniform_k needs k >= 1".into()));
        }
        match (self.method, &self.estimator) {
            (Method::WoBelief | Method::WoBeliefCot | Method::WoBeliefReflect, Some(e)) => {
                return Err(Error::Config(format!(
                    "{:?} reads no beliefs but estimator {e:?} is configured",
                    self.method
                )))
            }
            (Method::RandBelief, Some(e)) if *e != EstimatorChoice::Random => {
                return Err(Error::Config(format!(
                    "RAND_BELIEF needs the random estimator, got {e:?}"
                )))
            }
            _ => {}
        }
        self.dataset.condition_count.validate()?;
        self.generator.validate()
    }

    /// Estimator actually used, after method defaults.
    pub fn resolved_estimator(&self) -> Option<EstimatorChoice> {
        match self.method {
            Method::WoBelief | Method::WoBeliefCot | Method::WoBeliefReflect => None,
            Method::RandBelief => Some(EstimatorChoice::Random),
            Method::Beda | Method::MindDial => {
                Some(self.estimator.clone().unwrap_or(EstimatorChoice::Oracle))
            }
        }
    }

    /// Stable 16-hex-digit identifier of the canonical JSON form. Worker
    /// count does not change results and is left out.
    pub fn fingerprint(&self) -> String {
        let canonical = Self {
            workers: 1,
            ..self.clone()
        };
        fingerprint(&serde_json::to_vec(&canonical).expect("config serializes"))
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    /// Path of the metrics report written next to the records.
    pub fn report_path(&self) -> PathBuf {
        report_path_for(&self.output)
    }
}

pub fn report_path_for(records: &Path) -> PathBuf {
    let stem = records
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".into());
    records.with_file_name(format!("{stem}.report.json"))
}
