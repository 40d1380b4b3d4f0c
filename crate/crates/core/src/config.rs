//! Run configuration as a strict JSON document with defaults for every key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cvaesm::CvaesmConfig;
use crate::head::ClassifierConfig;
use crate::metrics::MetricsConfig;
use crate::temporal::ExtractorConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dataset_path: Option<PathBuf>,
    pub prompt_bank_path: Option<PathBuf>,
    /// Frames per clip.
    pub clip_len: usize,
    /// Permit classes with fewer records than folds.
    pub allow_sparse: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset_path: None,
            prompt_bank_path: None,
            clip_len: 16,
            allow_sparse: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub sched_factor: f64,
    pub sched_patience: usize,
    pub early_patience: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch: 16,
            epochs: 40,
            lr: 1e-3,
            sched_factor: 0.1,
            sched_patience: 5,
            early_patience: 10,
            folds: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataConfig,
    pub extractor: ExtractorConfig,
    pub classifier: ClassifierConfig,
    pub cvaesm: CvaesmConfig,
    pub trainer: TrainerConfig,
    pub metrics: MetricsConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Applies `section.key=value` overrides. Values are parsed as JSON and
    /// fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serialises");
        for ov in overrides {
            let ov = ov.as_ref();
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{ov}` is not of the form key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
            }
            *slot = value;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.clip_len == 0 {
            return Err(Error::Config("data.clip_len must be >= 1".into()));
        }
        self.extractor.validate()?;
        self.classifier.validate()?;
        self.cvaesm.validate()?;
        self.metrics.validate()?;
        let t = &self.trainer;
        if t.batch == 0 || t.epochs == 0 || t.sched_patience == 0 || t.early_patience == 0 {
            return Err(Error::Config(
                "trainer.batch, epochs, sched_patience and early_patience must be >= 1".into(),
            ));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(Error::Config(format!("trainer.lr must be positive, got {}", t.lr)));
        }
        if !(t.sched_factor > 0.0 && t.sched_factor < 1.0) {
            return Err(Error::Config(format!(
                "trainer.sched_factor must be in (0, 1), got {}",
                t.sched_factor
            )));
        }
        if t.folds < 2 {
            return Err(Error::Config("trainer.folds must be >= 2".into()));
        }
        Ok(())
    }
}
