//! Versioned JSON checkpoints. Model tensors serialize with full f64
//! precision (shortest round-tripping decimal), so save/load is exact.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use iea_core::abduction::AbductionModel;
use iea_core::emotion::EmotionModel;
use iea_core::generation::{IntentionInference, TinyCharGenerator};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file: {0}")]
    Format(String),
    #[error("checkpoint is for task `{got}`, expected `{expected}`")]
    WrongTask { got: String, expected: String },
    #[error("unsupported checkpoint version {got} (expected {expected})")]
    Version { got: u32, expected: u32 },
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile<T> {
    version: u32,
    task: String,
    model: T,
}

/// The full generation pipeline: the conditioning stack (encoder plus
/// intention projection from a speaker-side model), the speaker-to-
/// listener intention map, and the trainable generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPipeline {
    pub conditioner: EmotionModel,
    pub inference: IntentionInference,
    pub generator: TinyCharGenerator,
}

fn save<T: Serialize>(path: &Path, task: &str, model: &T) -> Result<(), CheckpointError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        task: task.to_string(),
        model,
    };
    let json = serde_json::to_string(&file).expect("model serializes");
    std::fs::write(path, json).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Deserialize)]
struct CheckpointHeader {
    version: u32,
    task: String,
}

fn load<T: DeserializeOwned>(path: &Path, task: &str) -> Result<T, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    // Header first, so version and task mismatches report as such rather
    // than as shape errors from the wrong model type.
    let header: CheckpointHeader =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            got: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if header.task != task {
        return Err(CheckpointError::WrongTask {
            got: header.task,
            expected: task.to_string(),
        });
    }
    let file: CheckpointFile<T> =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    Ok(file.model)
}

pub fn save_abduction(path: &Path, model: &AbductionModel) -> Result<(), CheckpointError> {
    save(path, "abduction", model)
}

pub fn load_abduction(path: &Path) -> Result<AbductionModel, CheckpointError> {
    load(path, "abduction")
}

pub fn save_emotion(path: &Path, model: &EmotionModel) -> Result<(), CheckpointError> {
    save(path, "emotion", model)
}

pub fn load_emotion(path: &Path) -> Result<EmotionModel, CheckpointError> {
    load(path, "emotion")
}

pub fn save_generation(path: &Path, model: &GenerationPipeline) -> Result<(), CheckpointError> {
    save(path, "generation", model)
}

pub fn load_generation(path: &Path) -> Result<GenerationPipeline, CheckpointError> {
    load(path, "generation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use iea_core::encoder::{EncoderConfig, EncoderParams, Vocabulary};
    use iea_core::rng::rng_from_seed;
    use iea_core::synth::{generate_synthetic_corpus, SyntheticSpec};

    fn fixture_encoder(seed: u64) -> EncoderParams {
        let spec = SyntheticSpec {
            pair_count: 15,
            ..SyntheticSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, seed).unwrap();
        EncoderParams::new(
            Vocabulary::build(&corpus, 1),
            EncoderConfig {
                embed_dim: 8,
                hidden: 6,
                attention: true,
            },
            &mut rng_from_seed(seed),
        )
    }

    #[test]
    fn abduction_checkpoint_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let model = AbductionModel::new(fixture_encoder(3), &mut rng_from_seed(3));
        save_abduction(&path, &model).unwrap();
        let loaded = load_abduction(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let model = AbductionModel::new(fixture_encoder(4), &mut rng_from_seed(4));
        save_abduction(&path, &model).unwrap();
        assert!(matches!(
            load_emotion(&path),
            Err(CheckpointError::WrongTask { .. })
        ));
    }

    #[test]
    fn corrupt_checkpoint_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        std::fs::write(&path, "{\"version\":1,\"task\":\"abduction\"").unwrap();
        assert!(matches!(
            load_abduction(&path),
            Err(CheckpointError::Format(_))
        ));
    }
}
