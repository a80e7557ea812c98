//! Run manifests: everything needed to reproduce a run bit-for-bit given
//! the same binaries — resolved config, input fingerprints, per-point grid
//! results, the winning hyperparameters, test metrics, and the artifact
//! list. Wall-clock time is informational and excluded from determinism
//! comparisons.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a manifest file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub path: String,
    pub sha256: String,
    pub pairs: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
    pub consistency_violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictInfo {
    pub path: String,
    pub sha256: String,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub index: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// "ok" or "failed: <reason>"; failed points do not stop the search.
    pub status: String,
    pub val_metric: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPoint {
    pub index: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub task: String,
    pub ablation_row: String,
    pub config: RunConfig,
    pub corpus: CorpusInfo,
    pub dictionary: Option<DictInfo>,
    pub grid_points: Vec<GridPointResult>,
    pub best: BestPoint,
    /// Test metrics of the winning model, keyed by metric name.
    pub test_metrics: BTreeMap<String, f64>,
    /// Paths relative to the run directory; every file the run wrote.
    pub artifacts: Vec<String>,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    /// Equality for determinism checks: wall-clock excluded.
    pub fn same_outcome(&self, other: &RunManifest) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.wall_clock_secs = 0.0;
        b.wall_clock_secs = 0.0;
        a == b
    }
}

pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = std::fs::read(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), ManifestError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ManifestError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        std::fs::write(&path, "hello").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }

    #[test]
    fn same_outcome_ignores_wall_clock() {
        let manifest = RunManifest {
            version: MANIFEST_VERSION,
            task: "abduction".into(),
            ablation_row: "+All".into(),
            config: RunConfig::default(),
            corpus: CorpusInfo {
                path: "c.jsonl".into(),
                sha256: "x".into(),
                pairs: 10,
                train_pairs: 8,
                val_pairs: 1,
                test_pairs: 1,
                consistency_violation_rate: 0.0,
            },
            dictionary: None,
            grid_points: vec![],
            best: BestPoint {
                index: 0,
                learning_rate: 0.01,
                batch_size: 16,
                epochs: 3,
                val_metric: 0.9,
            },
            test_metrics: BTreeMap::new(),
            artifacts: vec![],
            seed: 7,
            wall_clock_secs: 12.5,
        };
        let mut other = manifest.clone();
        other.wall_clock_secs = 99.0;
        assert!(manifest.same_outcome(&other));
        other.seed = 8;
        assert!(!manifest.same_outcome(&other));
    }
}
