use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corruptor::NoiseLevel;
use crate::model::ModelConfig;
use crate::segfeat::SegfeatConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Parse(String),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Element-wise dropout after every biLSTM layer.
    pub dropout: f64,
    /// Probability of zeroing a character's input row.
    pub input_dropout: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
    /// Epochs without a dev improvement before stopping (after `min_epochs`).
    pub patience: usize,
    pub seed: u64,
    /// Optional cap on the global gradient norm.
    pub clip_norm: Option<f64>,
    /// Training on corrupted text: disables input dropout.
    pub noise_mode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            dropout: 0.25,
            input_dropout: 0.25,
            min_epochs: 20,
            max_epochs: 100,
            patience: 10,
            seed: 1,
            clip_norm: None,
            noise_mode: false,
        }
    }
}

impl TrainConfig {
    pub fn effective_input_dropout(&self) -> f64 {
        if self.noise_mode {
            0.0
        } else {
            self.input_dropout
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, message: &str| Err(ConfigError::Invalid { key, message: message.into() });
        for (key, p) in [("train.dropout", self.dropout), ("train.input_dropout", self.input_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return invalid(key, "must lie in [0, 1)");
            }
        }
        for (key, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return invalid(key, "must lie in [0, 1)");
            }
        }
        if self.batch_size == 0 {
            return invalid("train.batch_size", "must be at least 1");
        }
        if !(self.lr > 0.0) {
            return invalid("train.lr", "must be positive");
        }
        if !(self.adam_eps > 0.0) {
            return invalid("train.adam_eps", "must be positive");
        }
        if self.min_epochs == 0 {
            return invalid("train.min_epochs", "must be at least 1");
        }
        if self.max_epochs < self.min_epochs {
            return invalid("train.max_epochs", "must not be below min_epochs");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return invalid("train.clip_norm", "must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub level: Option<NoiseLevel>,
    pub p_d: Option<f64>,
    pub p_i: Option<f64>,
    pub seed: Option<u64>,
}

/// Everything a config file can set, one table per section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub segfeat: SegfeatConfig,
    pub noise: NoiseConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate()?;
        let invalid = |key, message: &str| Err(ConfigError::Invalid { key, message: message.into() });
        if self.model.max_len == 0 {
            return invalid("model.max_len", "must be at least 1");
        }
        if self.model.embed_dim == 0 || self.model.hidden == 0 || self.model.layers == 0 {
            return invalid("model", "dimensions and layer count must be positive");
        }
        if self.segfeat.dim == 0 || self.segfeat.srnn_hidden == 0 {
            return invalid("segfeat.dim", "must be positive");
        }
        for (key, p) in [("noise.p_d", self.noise.p_d), ("noise.p_i", self.noise.p_i)] {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return invalid(key, "must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }
}
