//! Prediction output files (JSON-lines), one record per evaluated item.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use iea_core::generation::{ConditioningMode, FinishReason};
use iea_core::labels::{EmotionLabel, IntentionLabel, SatisfactionLabel};

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed prediction record: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbductionRecord {
    pub id: String,
    pub predicted_intention: IntentionLabel,
    pub distribution: [f64; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionRecord {
    pub id: String,
    pub predicted_emotion: EmotionLabel,
    pub predicted_satisfaction: SatisfactionLabel,
    pub emotion_distribution: [f64; 6],
    pub satisfaction_distribution: [f64; 2],
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub input_text: String,
    pub mode: ConditioningMode,
    pub response: String,
    pub finish_reason: FinishReason,
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PredictionError> {
    let io_err = |source| PredictionError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PredictionError> {
    let file = std::fs::File::open(path).map_err(|source| PredictionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let text = line.map_err(|source| PredictionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&text).map_err(|e| PredictionError::Malformed {
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abduction_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let records = vec![AbductionRecord {
            id: "a".into(),
            predicted_intention: IntentionLabel::Request,
            distribution: [0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
        }];
        write_records(&path, &records).unwrap();
        let back: Vec<AbductionRecord> = read_records(&path).unwrap();
        assert_eq!(back, records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"predicted_intention\":\"request\""));
    }
}
