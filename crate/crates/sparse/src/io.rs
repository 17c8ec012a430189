//! Dataset files: JSON Lines, and a raw little-endian `f32` matrix with a
//! JSON sidecar header.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_core::dataset::{validate_records, EmbeddingRecord};

use crate::error::{Result, SparseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Binary,
}

impl DatasetFormat {
    /// `.f32` and `.header.json` mean binary, `.jsonl` means JSON Lines.
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".f32") || name.ends_with(".header.json") {
            Ok(DatasetFormat::Binary)
        } else if name.ends_with(".jsonl") {
            Ok(DatasetFormat::Jsonl)
        } else {
            Err(SparseError::format(
                path,
                "cannot infer dataset format; use a .jsonl or .f32 extension",
            ))
        }
    }
}

/// Sidecar header of the binary format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub dimension: usize,
    pub count: usize,
    pub ids: Vec<String>,
    pub concept_tokens: Vec<BTreeSet<String>>,
    pub pair_ids: Vec<Option<String>>,
    pub gold_labels: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<Option<String>>>,
}

/// Matrix and header paths for a binary dataset named by either file or by
/// its stem.
pub fn binary_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".f32")
        .or_else(|| s.strip_suffix(".header.json"))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}.f32")),
        PathBuf::from(format!("{stem}.header.json")),
    )
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<EmbeddingRecord>> {
    let records = match format {
        DatasetFormat::Jsonl => read_jsonl(path)?,
        DatasetFormat::Binary => read_binary(path)?,
    };
    validate_records(&records)?;
    Ok(records)
}

/// Binary output stores embeddings as `f32`; values that are already `f32`
/// round-trip bit-exactly.
pub fn save_dataset(records: &[EmbeddingRecord], path: &Path, format: DatasetFormat) -> Result<()> {
    validate_records(records)?;
    match format {
        DatasetFormat::Jsonl => write_jsonl(records, path),
        DatasetFormat::Binary => write_binary(records, path),
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let file = File::open(path).map_err(|e| SparseError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SparseError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| SparseError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| SparseError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| SparseError::Json {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        writeln!(w, "{line}").map_err(|e| SparseError::io(path, e))?;
    }
    w.flush().map_err(|e| SparseError::io(path, e))
}

fn read_binary(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let (matrix_path, header_path) = binary_paths(path);
    let header: BinaryHeader = crate::checkpoint::read_json(&header_path)?;
    let bytes = fs::read(&matrix_path).map_err(|e| SparseError::io(&matrix_path, e))?;
    let n = header.dimension;
    let expected = header.count * n * 4;
    if bytes.len() != expected {
        return Err(SparseError::format(
            &matrix_path,
            format!(
                "expected {expected} bytes for {} x {n} f32, found {}",
                header.count,
                bytes.len()
            ),
        ));
    }
    let lens = [
        ("ids", header.ids.len()),
        ("concept_tokens", header.concept_tokens.len()),
        ("pair_ids", header.pair_ids.len()),
        ("gold_labels", header.gold_labels.len()),
        ("texts", header.texts.as_ref().map_or(header.count, Vec::len)),
    ];
    if let Some((field, len)) = lens.iter().find(|(_, l)| *l != header.count) {
        return Err(SparseError::format(
            &header_path,
            format!("header field {field} has {len} entries, count is {}", header.count),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut texts = header.texts.map(Vec::into_iter);
    let records = header
        .ids
        .into_iter()
        .zip(header.concept_tokens)
        .zip(header.pair_ids)
        .zip(header.gold_labels)
        .enumerate()
        .map(|(row, (((id, concept_tokens), pair_id), gold_label))| EmbeddingRecord {
            id,
            embedding: values[row * n..(row + 1) * n].to_vec(),
            concept_tokens,
            pair_id,
            gold_label,
            text: texts.as_mut().and_then(|t| t.next()).flatten(),
        })
        .collect();
    Ok(records)
}

fn write_binary(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let (matrix_path, header_path) = binary_paths(path);
    let n = records.first().map_or(0, |r| r.embedding.len());
    let mut bytes = Vec::with_capacity(records.len() * n * 4);
    for r in records {
        for (i, v) in r.embedding.iter().enumerate() {
            let f = *v as f32;
            if !f.is_finite() {
                return Err(SparseError::format(
                    &matrix_path,
                    format!("record {} component {i} overflows f32", r.id),
                ));
            }
            bytes.extend_from_slice(&f.to_le_bytes());
        }
    }
    let has_text = records.iter().any(|r| r.text.is_some());
    let header = BinaryHeader {
        dimension: n,
        count: records.len(),
        ids: records.iter().map(|r| r.id.clone()).collect(),
        concept_tokens: records.iter().map(|r| r.concept_tokens.clone()).collect(),
        pair_ids: records.iter().map(|r| r.pair_id.clone()).collect(),
        gold_labels: records.iter().map(|r| r.gold_label).collect(),
        texts: has_text.then(|| records.iter().map(|r| r.text.clone()).collect()),
    };
    fs::write(&matrix_path, bytes).map_err(|e| SparseError::io(&matrix_path, e))?;
    crate::checkpoint::write_json(&header_path, &header)
}
