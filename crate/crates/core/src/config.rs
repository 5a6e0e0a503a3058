//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_FPR_LIMIT, MAX_THRESHOLDS};
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Class-balanced sampling; off gives plain shuffled epochs of matched
    /// length.
    pub balanced: bool,
    /// Budget in balanced epochs.
    pub epochs: u32,
    pub seed: u64,
    /// Log the mean loss every this many iterations.
    pub log_every: usize,
    pub augment_prob: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            balanced: true,
            epochs: 5,
            seed: 0,
            log_every: 10,
            augment_prob: crate::data::AUGMENT_PROB,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths resolve against the config file's directory.
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub fpr_limit: f64,
    /// Maximum number of thresholds in the PRO sweep.
    pub thresholds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fpr_limit: DEFAULT_FPR_LIMIT,
            thresholds: MAX_THRESHOLDS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::Config("betas must lie in [0, 1) and eps must be positive".into()));
        }
        if o.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.training.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.training.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.training.augment_prob) {
            return Err(Error::Config("augment_prob must lie in [0, 1]".into()));
        }
        if !(self.eval.fpr_limit > 0.0 && self.eval.fpr_limit <= 1.0) {
            return Err(Error::Config(format!(
                "fpr_limit must lie in (0, 1], got {}",
                self.eval.fpr_limit
            )));
        }
        if self.eval.thresholds < 2 {
            return Err(Error::Config("eval.thresholds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative manifest path is made relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.data.manifest.is_relative() && !cfg.data.manifest.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                cfg.data.manifest = dir.join(&cfg.data.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("[optimizer]\nlr = 0.001\n[training]\nbalanced = false\n").unwrap();
        assert_eq!(cfg.optimizer.lr, 1e-3);
        assert_eq!(cfg.optimizer.batch_size, 32);
        assert!(!cfg.training.balanced);
        assert_eq!(cfg.eval.fpr_limit, 0.3);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[optimizer]\nlr = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[training]\nepochs = 0\n").is_err());
        assert!(RunConfig::from_toml("[eval]\nfpr_limit = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[model]\nbogus = 1\n").is_err());
    }
}
