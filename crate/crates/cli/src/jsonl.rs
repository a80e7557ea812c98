//! JSON-lines corpus files: one object per line with keys exactly
//! {id, utterance_s, utterance_r, intention_s, intention_r, emotion_s,
//! satisfaction}.
//!
//! Syntactic problems and unknown labels abort with the offending line
//! number; soft schema violations (empty utterances, the satisfaction/
//! emotion consistency rule) are collected as warnings without dropping
//! the record.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use iea_core::corpus::{validate_pair, Corpus, ConversationPair, Violation};

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown {field} label `{value}`")]
    Label {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate pair id `{id}`")]
    DuplicateId { line: usize, id: String },
}

/// A soft violation attached to its source line and record.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RecordWarning {
    pub line: usize,
    pub id: String,
    pub violation: Violation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    utterance_s: String,
    utterance_r: String,
    intention_s: String,
    intention_r: String,
    emotion_s: String,
    satisfaction: String,
}

fn convert(raw: RawRecord, line: usize) -> Result<ConversationPair, JsonlError> {
    let label = |field: &'static str, value: &str| JsonlError::Label {
        line,
        field,
        value: value.to_string(),
    };
    Ok(ConversationPair {
        intention_s: raw
            .intention_s
            .parse()
            .map_err(|_| label("intention_s", &raw.intention_s))?,
        intention_r: raw
            .intention_r
            .parse()
            .map_err(|_| label("intention_r", &raw.intention_r))?,
        emotion_s: raw
            .emotion_s
            .parse()
            .map_err(|_| label("emotion_s", &raw.emotion_s))?,
        satisfaction: raw
            .satisfaction
            .parse()
            .map_err(|_| label("satisfaction", &raw.satisfaction))?,
        id: raw.id,
        utterance_s: raw.utterance_s,
        utterance_r: raw.utterance_r,
    })
}

/// Parse a corpus from a reader. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<(Corpus, Vec<RecordWarning>), JsonlError> {
    let mut pairs: Vec<ConversationPair> = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|source| JsonlError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&text).map_err(|e| JsonlError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let pair = convert(raw, line_no)?;
        if !seen.insert(pair.id.clone()) {
            return Err(JsonlError::DuplicateId {
                line: line_no,
                id: pair.id,
            });
        }
        for violation in validate_pair(&pair) {
            warnings.push(RecordWarning {
                line: line_no,
                id: pair.id.clone(),
                violation,
            });
        }
        pairs.push(pair);
    }
    Ok((
        Corpus::new(pairs).expect("duplicates checked during parse"),
        warnings,
    ))
}

pub fn read_corpus(path: &Path) -> Result<(Corpus, Vec<RecordWarning>), JsonlError> {
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(BufReader::new(file))
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::create(path).map_err(io_err)?;
    for pair in corpus.iter() {
        let line = serde_json::to_string(pair).expect("pair serialization is infallible");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// Fraction of records violating the satisfaction/emotion consistency
/// rule.
pub fn consistency_violation_rate(corpus: &Corpus, warnings: &[RecordWarning]) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let violations = warnings
        .iter()
        .filter(|w| matches!(w.violation, Violation::ConsistencyRule { .. }))
        .count();
    violations as f64 / corpus.len() as f64
}
