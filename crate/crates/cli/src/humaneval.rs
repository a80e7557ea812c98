//! Human-evaluation CSV files with header
//! `id,rater,coherent,consistent,intention,emotion`.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use iea_core::eval::HumanEvalRecord;

#[derive(Debug, Error)]
pub enum HumanEvalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(String),
}

#[derive(Deserialize)]
struct Row {
    id: String,
    rater: String,
    coherent: u8,
    consistent: u8,
    intention: u8,
    emotion: u8,
}

pub fn read_human_eval(path: &Path) -> Result<Vec<HumanEvalRecord>, HumanEvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HumanEvalError::Csv(e.to_string()))?;
    let mut records = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| HumanEvalError::Csv(e.to_string()))?;
        records.push(HumanEvalRecord {
            id: row.id,
            rater: row.rater,
            coherent: row.coherent,
            consistent: row.consistent,
            intention: row.intention,
            emotion: row.emotion,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use iea_core::eval::aggregate_human_eval;

    #[test]
    fn reads_csv_and_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.csv");
        std::fs::write(
            &path,
            "id,rater,coherent,consistent,intention,emotion\n\
             g1,r1,3,2,3,2\n\
             g1,r2,3,2,3,2\n\
             g2,r1,1,1,2,2\n\
             g2,r2,1,1,2,2\n",
        )
        .unwrap();
        let records = read_human_eval(&path).unwrap();
        assert_eq!(records.len(), 4);
        let summary = aggregate_human_eval(&records).unwrap();
        assert_eq!(summary.rater_agreement, Some(1.0));
        assert!((summary.mean_coherent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_a_csv_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.csv");
        std::fs::write(&path, "id,rater,coherent\ng1,r1,3\n").unwrap();
        assert!(read_human_eval(&path).is_err());
    }
}
