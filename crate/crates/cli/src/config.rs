use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use piqa_core::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a training run needs. Precedence: defaults < JSON file < flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Share of reference contents assigned to training.
    pub train_fraction: f64,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Where the loss log and split record go; defaults to the checkpoint's directory.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_fraction: 0.8,
            manifest: None,
            checkpoint: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        anyhow::ensure!(
            self.train_fraction > 0.0 && self.train_fraction < 1.0,
            "train_fraction must be in (0, 1), got {}",
            self.train_fraction
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"train": {"epochs": 3}, "model": {"variant": "residual_only"}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.model.conv_channels, vec![8, 8, 16, 16, 32]);
        assert_eq!(cfg.train_fraction, 0.8);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epochs": 3}"#).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let text = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }
}
