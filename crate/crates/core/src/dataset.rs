//! JSONL dataset reading and writing.
//!
//! Datasets and prediction files are one JSON object per line. Errors carry
//! the path and the 1-based line number so bad rows are easy to locate.

use crate::schema::{EvalRecord, PredictionRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Line {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads a JSONL file into typed rows. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|source| DatasetError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows as JSONL (one compact JSON object per line, trailing newline).
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for row in rows {
        let line = serde_json::to_string(row).map_err(|source| DatasetError::Line {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    write_atomic(path, &out).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads labeled evaluation rows.
pub fn load_eval_records(path: &Path) -> Result<Vec<EvalRecord>, DatasetError> {
    read_jsonl(path)
}

/// Loads model predictions.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, DatasetError> {
    read_jsonl(path)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(bytes)?;
    file.flush()
}
