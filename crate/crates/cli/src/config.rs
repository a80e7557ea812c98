//! Run configuration: JSON file, flag overrides, and the ablation-flag
//! vocabulary shared by training and reporting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use iea_core::intdic::DictConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Abduction,
    Emotion,
    Generation,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Abduction => "abduction",
            Task::Emotion => "emotion",
            Task::Generation => "generation",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file: {0}")]
    Format(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown encoder `{0}` (available: recurrent, recurrent+attention)")]
    UnknownEncoder(String),
    #[error("unknown ablation component `{0}` (known: intdic, fusion, multitask, full-conditioning)")]
    UnknownAblation(String),
}

/// Which optional components are enabled. Defaults enable everything
/// (the `+All` configuration); `--ablate` flags switch components off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub intdic: bool,
    pub fusion: bool,
    pub multitask: bool,
    pub full_conditioning: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            intdic: true,
            fusion: true,
            multitask: true,
            full_conditioning: true,
        }
    }
}

impl AblationFlags {
    pub fn disable(&mut self, component: &str) -> Result<(), ConfigError> {
        match component {
            "intdic" => self.intdic = false,
            "fusion" => self.fusion = false,
            "multitask" => self.multitask = false,
            "full-conditioning" | "full_conditioning" => self.full_conditioning = false,
            other => return Err(ConfigError::UnknownAblation(other.to_string())),
        }
        Ok(())
    }

    /// Report row label. The classifier components map one-to-one onto
    /// the ablation table rows.
    pub fn row_label(&self) -> String {
        let enabled: Vec<&str> = [
            ("+IntDic", self.intdic),
            ("+Fusion Mechanism", self.fusion),
            ("+Multi-task", self.multitask),
        ]
        .iter()
        .filter(|(_, on)| *on)
        .map(|(name, _)| *name)
        .collect();
        match enabled.len() {
            0 => "base".to_string(),
            1 => enabled[0].to_string(),
            3 => "+All".to_string(),
            _ => enabled.join(""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            learning_rates: vec![0.01, 0.04, 0.1, 0.4],
            batch_sizes: vec![16, 32],
            epochs: vec![3, 20],
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<(f64, usize, usize)> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &bs in &self.batch_sizes {
                for &ep in &self.epochs {
                    out.push((lr, bs, ep));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderChoice {
    Recurrent,
    RecurrentAttention,
}

impl EncoderChoice {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "recurrent" => Ok(EncoderChoice::Recurrent),
            "recurrent+attention" | "recurrent_attention" => Ok(EncoderChoice::RecurrentAttention),
            other => Err(ConfigError::UnknownEncoder(other.to_string())),
        }
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, EncoderChoice::RecurrentAttention)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub encoder: EncoderChoice,
    pub embed_dim: usize,
    pub hidden: usize,
    pub vocab_min_freq: usize,
    pub dict: DictConfig,
    pub grid: GridSpec,
    pub seed: u64,
    pub ablation: AblationFlags,
    /// Optional pretrained word-vector file applied to the embedding.
    pub word_vectors: Option<PathBuf>,
    /// For generation runs: reuse a trained emotion checkpoint as the
    /// conditioning stack instead of a fresh seeded one.
    pub emotion_checkpoint: Option<PathBuf>,
    /// Cache directory for external plug-in models, from the
    /// IEA_PLUGIN_CACHE environment variable when unset.
    pub plugin_cache: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Abduction,
            corpus: PathBuf::new(),
            out_dir: PathBuf::from("runs"),
            encoder: EncoderChoice::Recurrent,
            embed_dim: 300,
            hidden: 128,
            vocab_min_freq: 1,
            dict: DictConfig::default(),
            grid: GridSpec::default(),
            seed: 0,
            ablation: AblationFlags::default(),
            word_vectors: None,
            emotion_checkpoint: None,
            plugin_cache: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Format(e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.learning_rates.is_empty()
            || self.grid.batch_sizes.is_empty()
            || self.grid.epochs.is_empty()
        {
            return Err(ConfigError::Invalid("grid axes must be non-empty".into()));
        }
        if self.grid.epochs.iter().any(|&e| e == 0) {
            return Err(ConfigError::Invalid("epochs must be >= 1".into()));
        }
        if self.grid.learning_rates.iter().any(|&lr| !(lr > 0.0)) {
            return Err(ConfigError::Invalid("learning rates must be > 0".into()));
        }
        if self.grid.batch_sizes.iter().any(|&b| b == 0) {
            return Err(ConfigError::Invalid("batch sizes must be >= 1".into()));
        }
        if self.embed_dim == 0 || self.hidden == 0 {
            return Err(ConfigError::Invalid("model dimensions must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolve_plugin_cache(&mut self) {
        if self.plugin_cache.is_none() {
            if let Ok(dir) = std::env::var("IEA_PLUGIN_CACHE") {
                self.plugin_cache = Some(PathBuf::from(dir));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_the_documented_one() {
        let g = GridSpec::default();
        assert_eq!(g.learning_rates, vec![0.01, 0.04, 0.1, 0.4]);
        assert_eq!(g.batch_sizes, vec![16, 32]);
        assert_eq!(g.epochs, vec![3, 20]);
        assert_eq!(g.points().len(), 16);
    }

    #[test]
    fn ablation_labels_map_one_to_one() {
        let mut all = AblationFlags::default();
        assert_eq!(all.row_label(), "+All");
        all.disable("fusion").unwrap();
        all.disable("multitask").unwrap();
        assert_eq!(all.row_label(), "+IntDic");
        let mut base = AblationFlags::default();
        for c in ["intdic", "fusion", "multitask"] {
            base.disable(c).unwrap();
        }
        assert_eq!(base.row_label(), "base");
        let mut fusion_only = AblationFlags::default();
        fusion_only.disable("intdic").unwrap();
        fusion_only.disable("multitask").unwrap();
        assert_eq!(fusion_only.row_label(), "+Fusion Mechanism");
    }

    #[test]
    fn unknown_ablation_is_an_error() {
        let mut flags = AblationFlags::default();
        assert!(flags.disable("dropout").is_err());
    }

    #[test]
    fn validation_rejects_empty_grid() {
        let mut config = RunConfig::default();
        config.grid.learning_rates.clear();
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = RunConfig {
            task: Task::Emotion,
            seed: 42,
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }
}
