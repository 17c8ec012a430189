//! JSON checkpoints for masks, classifiers, attackers and sensitivity matrices.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sparse_core::attack::AttackModel;
use sparse_core::mask::{NeuronMask, GAMMA, XI};
use sparse_core::nn::Mlp;
use sparse_core::numkit::DiagonalPD;

use crate::error::{Result, SparseError};
use crate::fingerprint::Fingerprint;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| SparseError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| SparseError::Json {
        path: path.to_path_buf(),
        line: source.line(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| SparseError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| SparseError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCheckpoint {
    pub n: usize,
    pub log_alpha: Vec<f64>,
    pub log_beta: Vec<f64>,
    pub xi: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<Fingerprint>,
}

impl MaskCheckpoint {
    pub fn new(mask: &NeuronMask, fingerprint: Option<Fingerprint>) -> Self {
        MaskCheckpoint {
            n: mask.len(),
            log_alpha: mask.log_alpha.clone(),
            log_beta: mask.log_beta.clone(),
            xi: XI,
            gamma: GAMMA,
            fingerprint,
        }
    }

    pub fn load(path: &Path) -> Result<NeuronMask> {
        let ck: MaskCheckpoint = read_json(path)?;
        if ck.xi != XI || ck.gamma != GAMMA {
            return Err(SparseError::format(
                path,
                format!("stretch interval ({}, {}) differs from ({XI}, {GAMMA})", ck.gamma, ck.xi),
            ));
        }
        if ck.log_alpha.len() != ck.n {
            return Err(SparseError::format(
                path,
                format!("n = {} but log_alpha has {} entries", ck.n, ck.log_alpha.len()),
            ));
        }
        Ok(NeuronMask::from_parts(ck.log_alpha, ck.log_beta)?)
    }
}

/// Layer widths plus per-layer flat weights (row-major, out x in) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkWeights {
    pub fn from_mlp(net: &Mlp) -> Self {
        let (weights, biases) = (0..net.num_layers())
            .map(|l| {
                let (w, b) = net.layer(l);
                (w.to_vec(), b.to_vec())
            })
            .unzip();
        NetworkWeights {
            layer_sizes: net.sizes().to_vec(),
            weights,
            biases,
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        if self.weights.len() != self.biases.len() {
            return Err(SparseError::config("weights and biases list different layer counts"));
        }
        let flat = self
            .weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect();
        Ok(Mlp::from_parts(self.layer_sizes.clone(), flat)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    #[serde(flatten)]
    pub network: NetworkWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<Fingerprint>,
}

impl ClassifierCheckpoint {
    pub fn load(path: &Path) -> Result<Mlp> {
        let ck: ClassifierCheckpoint = read_json(path)?;
        ck.network.to_mlp().map_err(|e| SparseError::format(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCheckpoint {
    pub vocabulary: Vec<String>,
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub network: NetworkWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<Fingerprint>,
}

impl AttackCheckpoint {
    pub fn new(model: &AttackModel, fingerprint: Option<Fingerprint>) -> Self {
        AttackCheckpoint {
            vocabulary: model.vocabulary.clone(),
            hidden: model.hidden.clone(),
            network: NetworkWeights::from_mlp(&model.network),
            fingerprint,
        }
    }

    pub fn load(path: &Path) -> Result<AttackModel> {
        let ck: AttackCheckpoint = read_json(path)?;
        let wrap = |e: SparseError| SparseError::format(path, e.to_string());
        let net = ck.network.to_mlp().map_err(wrap)?;
        let model = AttackModel::new(ck.vocabulary, net).map_err(|e| wrap(e.into()))?;
        if model.hidden != ck.hidden {
            return Err(SparseError::format(path, "hidden sizes disagree with layer sizes"));
        }
        Ok(model)
    }
}

/// A diagonal sensitivity matrix on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaFile {
    pub diag: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<Fingerprint>,
}

impl SigmaFile {
    pub fn load(path: &Path) -> Result<DiagonalPD> {
        let f: SigmaFile = read_json(path)?;
        DiagonalPD::new(f.diag).map_err(|e| SparseError::format(path, e.to_string()))
    }
}
