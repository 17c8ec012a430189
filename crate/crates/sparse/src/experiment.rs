//! Building blocks of the sanitize / attack / evaluate pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sparse_core::attack::{predict_tokens, train_attack, AttackModel, AttackTrainConfig, LabeledEmbedding};
use sparse_core::dataset::EmbeddingRecord;
use sparse_core::mechanism::{perturb_record, MechanismConfig};
use sparse_core::metrics::{privacy_report, utility_pearson, PrivacyReport, ScoredPair, UtilityReport};
use sparse_core::numkit::{DiagonalPD, Rng};

use crate::error::{Result, SparseError};
use crate::exec::map_ordered;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Spherical Laplace-type noise.
    Isotropic,
    /// Elliptical noise from a learned neuron mask.
    Mahalanobis,
    /// Elliptical noise from an attribution-derived sensitivity matrix.
    MahalanobisWb,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Isotropic => "isotropic",
            Mechanism::Mahalanobis => "mahalanobis",
            Mechanism::MahalanobisWb => "mahalanobis-wb",
        }
    }

    /// Mechanism config, taking Σ from `sigma` for the elliptical kinds.
    pub fn config(self, epsilon: f64, n: usize, sigma: Option<&DiagonalPD>, seed: u64) -> Result<MechanismConfig> {
        Ok(match self {
            Mechanism::Isotropic => MechanismConfig::isotropic(epsilon, n, seed)?,
            Mechanism::Mahalanobis | Mechanism::MahalanobisWb => {
                let sigma = sigma.ok_or_else(|| {
                    SparseError::config(format!("mechanism {} needs a sensitivity matrix", self.name()))
                })?;
                if sigma.dim() != n {
                    return Err(SparseError::config(format!(
                        "sensitivity matrix has dimension {}, data has {n}",
                        sigma.dim()
                    )));
                }
                MechanismConfig::mahalanobis(epsilon, sigma.clone(), seed)?
            }
        })
    }
}

/// Independent 64-bit seed for a labelled sub-task of `seed`.
pub fn derived_seed(seed: u64, label: &str) -> u64 {
    Rng::seed_from(seed).split(label).next_u64()
}

/// Perturb every record with its own child stream.
pub fn sanitize_records(records: &[EmbeddingRecord], cfg: &MechanismConfig, parallel: bool) -> Result<Vec<EmbeddingRecord>> {
    map_ordered(records, parallel, |r| perturb_record(r, cfg))
        .into_iter()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}

/// Sorted union of the concept tokens in `records`.
pub fn concept_vocabulary(records: &[EmbeddingRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|r| r.concept_tokens.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn train_attacker(train: &[EmbeddingRecord], vocabulary: &[String], cfg: &AttackTrainConfig) -> Result<AttackModel> {
    if vocabulary.is_empty() {
        return Err(SparseError::config("attack vocabulary is empty: no concept tokens in training data"));
    }
    let data: Vec<LabeledEmbedding<'_>> = train
        .iter()
        .map(|r| LabeledEmbedding {
            embedding: &r.embedding,
            tokens: &r.concept_tokens,
        })
        .collect();
    Ok(train_attack(&data, vocabulary, cfg)?.model)
}

/// Leakage and confidence of `model` on `eval`, whose concept tokens are the
/// ground truth.
pub fn score_attack(model: &AttackModel, eval: &[EmbeddingRecord], threshold: f64, parallel: bool) -> Result<PrivacyReport> {
    let preds = map_ordered(eval, parallel, |r| predict_tokens(model, &r.embedding, threshold))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let truths: Vec<BTreeSet<String>> = eval.iter().map(|r| r.concept_tokens.clone()).collect();
    let (tokens, probs): (Vec<_>, Vec<_>) = preds.into_iter().map(|p| (p.tokens, p.probabilities)).unzip();
    Ok(privacy_report(&tokens, &probs, &truths)?)
}

/// Pearson correlation of cosine similarity against gold over sentence pairs
/// (records sharing a `pair_id`, gold taken from `gold_label`).
pub fn score_utility(records: &[EmbeddingRecord]) -> Result<UtilityReport> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in records {
        let (Some(p), Some(_)) = (r.pair_id.as_deref(), r.gold_label) else {
            return Err(SparseError::config(format!(
                "utility record {} needs both pair_id and gold_label",
                r.id
            )));
        };
        let g = groups.entry(p).or_default();
        if g.is_empty() {
            order.push(p);
        }
        g.push(r);
    }
    let pairs: Vec<ScoredPair<'_>> = order
        .iter()
        .map(|p| {
            let g = &groups[p];
            ScoredPair {
                a: &g[0].embedding,
                b: &g[1].embedding,
                gold: g[0].gold_label.unwrap_or_default(),
            }
        })
        .collect();
    Ok(utility_pearson(&pairs)?)
}

/// One evaluated `(mechanism, epsilon, seed)` cell, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub seed: u64,
    pub leakage: f64,
    pub confidence: f64,
    pub utility: Option<f64>,
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub seeds: usize,
    pub leakage: (f64, Option<f64>),
    pub confidence: (f64, Option<f64>),
    pub utility: Option<(f64, Option<f64>)>,
}

/// Mean and `n - 1` standard deviation; the deviation is absent for one value.
pub fn mean_and_sample_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| {
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, std)
}

/// One summary per `(mechanism, epsilon)`, in first-appearance order.
pub fn summarize(cells: &[CellResult]) -> Vec<Summary> {
    let mut keys: Vec<(Mechanism, u64)> = Vec::new();
    for c in cells {
        let k = (c.mechanism, c.epsilon.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(mechanism, bits)| {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.mechanism == mechanism && c.epsilon.to_bits() == bits)
                .collect();
            let col = |f: fn(&CellResult) -> f64| mean_and_sample_std(&group.iter().map(|c| f(c)).collect::<Vec<_>>());
            let utils: Option<Vec<f64>> = group.iter().map(|c| c.utility).collect();
            Summary {
                mechanism,
                epsilon: f64::from_bits(bits),
                seeds: group.len(),
                leakage: col(|c| c.leakage),
                confidence: col(|c| c.confidence),
                utility: utils.map(|u| mean_and_sample_std(&u)),
            }
        })
        .collect()
}

/// Fraction rendered as a percentage with two decimals.
pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

pub const CSV_HEADER: [&str; 9] = [
    "mechanism",
    "epsilon",
    "seed",
    "leakage",
    "confidence",
    "utility",
    "leakage_std",
    "confidence_std",
    "utility_std",
];

/// Per-seed rows followed by one `mean` row per `(mechanism, epsilon)`.
pub fn write_csv(path: &Path, cells: &[CellResult], summaries: &[Summary]) -> Result<()> {
    let wrap = |e: csv::Error| SparseError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(CSV_HEADER).map_err(wrap)?;
    let opt = |x: Option<f64>| x.map(percent).unwrap_or_default();
    for c in cells {
        w.write_record([
            c.mechanism.name().to_string(),
            c.epsilon.to_string(),
            c.seed.to_string(),
            percent(c.leakage),
            percent(c.confidence),
            opt(c.utility),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(wrap)?;
    }
    for s in summaries {
        w.write_record([
            s.mechanism.name().to_string(),
            s.epsilon.to_string(),
            "mean".to_string(),
            percent(s.leakage.0),
            percent(s.confidence.0),
            opt(s.utility.map(|u| u.0)),
            opt(s.leakage.1),
            opt(s.confidence.1),
            opt(s.utility.and_then(|u| u.1)),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| SparseError::io(path, e))
}
