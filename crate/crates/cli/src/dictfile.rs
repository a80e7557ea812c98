//! Dictionary files: `{"version": 1, "smoothing_mass": float,
//! "entries": {keyword: [7 floats]}}` with keys sorted for byte-stable
//! output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use iea_core::intdic::{DictError, IntentionDictionary};

pub const DICT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DictFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a dictionary file: {0}")]
    Format(String),
    #[error("unsupported dictionary version {got} (expected {expected})")]
    Version { got: u32, expected: u32 },
    #[error(transparent)]
    Invariant(#[from] DictError),
}

#[derive(Serialize, Deserialize)]
struct DictFile {
    version: u32,
    smoothing_mass: f64,
    entries: BTreeMap<String, [f64; 7]>,
}

pub fn save_dictionary(path: &Path, dict: &IntentionDictionary) -> Result<(), DictFileError> {
    let file = DictFile {
        version: DICT_FORMAT_VERSION,
        smoothing_mass: dict.smoothing_mass(),
        entries: dict.entries().clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("dictionary serializes");
    std::fs::write(path, json).map_err(|source| DictFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and re-validate. Round-trips the entries and smoothing mass;
/// build provenance is not part of the file format.
pub fn load_dictionary(path: &Path) -> Result<IntentionDictionary, DictFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| DictFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: DictFile =
        serde_json::from_str(&text).map_err(|e| DictFileError::Format(e.to_string()))?;
    if file.version != DICT_FORMAT_VERSION {
        return Err(DictFileError::Version {
            got: file.version,
            expected: DICT_FORMAT_VERSION,
        });
    }
    Ok(IntentionDictionary::from_entries(
        file.entries,
        file.smoothing_mass,
    )?)
}
