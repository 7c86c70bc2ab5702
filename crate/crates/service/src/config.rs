//! TOML service configuration.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! classifier_model = "models/generic-classify.tcm"
//! regressor_model = "models/generic-regress.tcm"
//! training_matrix = "features.csv"
//! persistence_dir = "state"
//! seed_window_s = 300.0
//!
//! [recalibration]
//! threshold = 400
//! seed = 42
//! # n_estimators = 100   # defaults to the generic regressor's
//!
//! [filter]
//! min_ibi_ms = 250.0
//!
//! [[catalog.actuators]]
//! name = "FAN"
//! power_w = [0.0, 15.0, 30.0]
//! comfort_delta = [0.0, 0.6, 1.1]
//! ```
//!
//! Relative paths resolve against the directory holding the file. An
//! omitted catalog means [`ActuatorCatalog::default_office`].

use std::path::{Path, PathBuf};

use comfort_core::FilterPolicy;
use serde::{Deserialize, Serialize};

use crate::planner::ActuatorCatalog;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecalibrationConfig {
    #[serde(default = "default_threshold")]
    pub threshold: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub n_estimators: Option<usize>,
}

fn default_threshold() -> usize {
    400
}

fn default_seed() -> u64 {
    42
}

fn default_seed_window() -> f64 {
    300.0
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl Default for RecalibrationConfig {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            seed: default_seed(),
            n_estimators: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub classifier_model: PathBuf,
    pub regressor_model: PathBuf,
    /// Feature matrix CSV the generic models were trained on.
    pub training_matrix: PathBuf,
    pub persistence_dir: PathBuf,
    #[serde(default = "default_seed_window")]
    pub seed_window_s: f64,
    #[serde(default)]
    pub recalibration: RecalibrationConfig,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default = "ActuatorCatalog::default_office")]
    pub catalog: ActuatorCatalog,
}

impl ServiceConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: ServiceConfig = toml::from_str(text)?;
        for p in [
            &mut cfg.classifier_model,
            &mut cfg.regressor_model,
            &mut cfg.training_matrix,
            &mut cfg.persistence_dir,
        ] {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_toml(&text, base).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.seed_window_s > 0.0) {
            return Err(ConfigError::Invalid("seed_window_s must be positive".into()));
        }
        if self.recalibration.threshold == 0 {
            return Err(ConfigError::Invalid("recalibration.threshold must be at least 1".into()));
        }
        if self.recalibration.n_estimators == Some(0) {
            return Err(ConfigError::Invalid("recalibration.n_estimators must be at least 1".into()));
        }
        self.filter
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.catalog
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
