//! Pretrained word-vector files: whitespace-separated text, one token
//! followed by its vector components per line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GloveError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected a token and {expected} floats, found {found} components")]
    WrongArity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: `{value}` is not a float")]
    BadFloat { line: usize, value: String },
}

/// Parse the file into (token, vector) entries, enforcing a uniform
/// dimension.
pub fn read_word_vectors(path: &Path, dim: usize) -> Result<Vec<(String, Vec<f64>)>, GloveError> {
    let file = File::open(path).map_err(|source| GloveError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|source| GloveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let mut parts = text.split_whitespace();
        let token = parts.next().expect("non-empty line");
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(GloveError::WrongArity {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        let mut vector = Vec::with_capacity(dim);
        for v in values {
            vector.push(v.parse::<f64>().map_err(|_| GloveError::BadFloat {
                line: line_no,
                value: v.to_string(),
            })?);
        }
        entries.push((token.to_string(), vector));
    }
    Ok(entries)
}
