//! Config fingerprints: every flag that shapes an output, plus SHA-256
//! digests of the input files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Result, SparseError};
use crate::io::{binary_paths, DatasetFormat};

/// Flags that never change output bytes.
pub const IGNORED_FLAGS: &[&str] = &["out", "similarity_out", "parallel", "csv", "checkpoint"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub command: String,
    pub flags: BTreeMap<String, Value>,
    /// Input path to hex SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 over the canonical JSON of the fields above.
    pub digest: String,
}

impl Fingerprint {
    pub fn new<F: Serialize>(command: &str, flags: &F, inputs: &[&Path]) -> Result<Self> {
        let flags = match serde_json::to_value(flags).map_err(|e| SparseError::config(e.to_string()))? {
            Value::Object(map) => map
                .into_iter()
                .filter(|(k, v)| !IGNORED_FLAGS.contains(&k.as_str()) && !v.is_null())
                .collect(),
            other => BTreeMap::from([("value".to_string(), other)]),
        };
        let mut hashes = BTreeMap::new();
        for p in inputs {
            for file in input_files(p) {
                hashes.insert(file.display().to_string(), sha256_file(&file)?);
            }
        }
        let canonical = serde_json::to_string(&(command, &flags, &hashes))
            .map_err(|e| SparseError::config(e.to_string()))?;
        Ok(Fingerprint {
            command: command.to_string(),
            flags,
            inputs: hashes,
            digest: hex::encode(Sha256::digest(canonical.as_bytes())),
        })
    }
}

fn input_files(path: &Path) -> Vec<std::path::PathBuf> {
    match DatasetFormat::from_path(path) {
        Ok(DatasetFormat::Binary) => {
            let (m, h) = binary_paths(path);
            vec![m, h]
        }
        _ => vec![path.to_path_buf()],
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| SparseError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
