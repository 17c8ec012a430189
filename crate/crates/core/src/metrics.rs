//! Privacy and utility metrics.
//!
//! All ratios are fractions in `[0, 1]`; rendering as percentages is left to
//! the reporting layer.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::stats::{wilcoxon_signed_rank, SignedRankTest};
use crate::{Error, Result};

fn total_instances(truths: &[BTreeSet<String>]) -> usize {
    truths.iter().map(BTreeSet::len).sum()
}

/// Fraction of true sensitive-token instances that appear in the predictions.
pub fn leakage(predictions: &[BTreeSet<String>], truths: &[BTreeSet<String>]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::dim("leakage predictions", truths.len(), predictions.len()));
    }
    let t = total_instances(truths);
    if t == 0 {
        return Err(Error::Empty("sensitive token instances"));
    }
    let hits: usize = predictions
        .iter()
        .zip(truths)
        .map(|(p, c)| c.iter().filter(|tok| p.contains(*tok)).count())
        .sum();
    Ok(hits as f64 / t as f64)
}

/// Mean attacker probability over true sensitive-token instances; tokens with
/// no probability entry count as 0.
pub fn confidence(probabilities: &[BTreeMap<String, f64>], truths: &[BTreeSet<String>]) -> Result<f64> {
    if probabilities.len() != truths.len() {
        return Err(Error::dim("confidence probabilities", truths.len(), probabilities.len()));
    }
    let t = total_instances(truths);
    if t == 0 {
        return Err(Error::Empty("sensitive token instances"));
    }
    let mass: f64 = probabilities
        .iter()
        .zip(truths)
        .map(|(p, c)| c.iter().map(|tok| p.get(tok).copied().unwrap_or(0.0)).sum::<f64>())
        .sum();
    Ok(mass / t as f64)
}

/// Leakage and confidence for one category (a token).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub leakage: f64,
    pub confidence: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub leakage: f64,
    pub confidence: f64,
    pub total_sensitive_instances: usize,
    pub per_category: BTreeMap<String, CategoryScore>,
}

/// Overall and per-token leakage/confidence.
pub fn privacy_report(
    predictions: &[BTreeSet<String>],
    probabilities: &[BTreeMap<String, f64>],
    truths: &[BTreeSet<String>],
) -> Result<PrivacyReport> {
    let leak = leakage(predictions, truths)?;
    let conf = confidence(probabilities, truths)?;
    let mut per: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for ((pred, probs), truth) in predictions.iter().zip(probabilities).zip(truths) {
        for tok in truth {
            let e = per.entry(tok.clone()).or_default();
            e.0 += 1;
            if pred.contains(tok) {
                e.1 += 1;
            }
            e.2 += probs.get(tok).copied().unwrap_or(0.0);
        }
    }
    Ok(PrivacyReport {
        leakage: leak,
        confidence: conf,
        total_sensitive_instances: total_instances(truths),
        per_category: per
            .into_iter()
            .map(|(tok, (count, hits, mass))| {
                (
                    tok,
                    CategoryScore {
                        leakage: hits as f64 / count as f64,
                        confidence: mass / count as f64,
                        instances: count,
                    },
                )
            })
            .collect(),
    })
}

/// Per-dimension neuron sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    pub delta: Vec<f64>,
}

/// `delta[i] = max_k |pos_k[i] - neg_k[i]|` over matched pairs.
pub fn neuron_sensitivity(paired: &PairedDataset) -> Result<SensitivityProfile> {
    if paired.is_empty() {
        return Err(Error::Empty("paired dataset"));
    }
    let n = paired.dimension;
    let mut delta = vec![0.0f64; n];
    for (p, q) in paired.positives.iter().zip(&paired.negatives) {
        if p.embedding.len() != n || q.embedding.len() != n {
            return Err(Error::dim("neuron_sensitivity", n, p.embedding.len().min(q.embedding.len())));
        }
        for ((d, a), b) in delta.iter_mut().zip(&p.embedding).zip(&q.embedding) {
            *d = d.max((a - b).abs());
        }
    }
    Ok(SensitivityProfile { delta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub dims: Vec<usize>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl GroupStats {
    fn of(profile: &[f64], dims: Vec<usize>) -> Self {
        let vals: Vec<f64> = dims.iter().map(|d| profile[*d]).collect();
        GroupStats {
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            dims,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTest {
    pub top: GroupStats,
    pub bottom: GroupStats,
    pub wilcoxon: SignedRankTest,
}

impl SplitTest {
    pub fn p_value(&self) -> f64 {
        self.wilcoxon.p_value
    }
}

/// Compare the top and bottom `fraction` of dimensions by sensitivity.
///
/// Both groups hold `floor(n * fraction)` dimensions, each sorted by
/// descending sensitivity; the i-th member of one group is paired with the
/// i-th of the other for the signed-rank test.
pub fn sensitivity_split_test(profile: &SensitivityProfile, fraction: f64) -> Result<SplitTest> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::param("split fraction must be in (0, 0.5]"));
    }
    let n = profile.delta.len();
    let k = libm::floor(n as f64 * fraction) as usize;
    if k == 0 {
        return Err(Error::param("too few dimensions for the requested split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| profile.delta[*b].total_cmp(&profile.delta[*a]).then(a.cmp(b)));
    let top: Vec<usize> = order[..k].to_vec();
    let bottom: Vec<usize> = order[n - k..].to_vec();
    let diffs: Vec<f64> = top
        .iter()
        .zip(&bottom)
        .map(|(t, b)| profile.delta[*t] - profile.delta[*b])
        .collect();
    Ok(SplitTest {
        top: GroupStats::of(&profile.delta, top),
        bottom: GroupStats::of(&profile.delta, bottom),
        wilcoxon: wilcoxon_signed_rank(&diffs),
    })
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine similarity", a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("pearson", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Empty("pearson needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("first series"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("second series"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub pearson: f64,
    pub num_pairs: usize,
}

/// One scored sentence pair: two embeddings and a gold similarity.
#[derive(Debug, Clone, Copy)]
pub struct ScoredPair<'a> {
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub gold: f64,
}

/// Pearson correlation between pair cosine similarities and gold scores.
pub fn utility_pearson(pairs: &[ScoredPair<'_>]) -> Result<UtilityReport> {
    if pairs.len() < 3 {
        return Err(Error::Empty("utility needs at least three pairs"));
    }
    let cos = pairs
        .iter()
        .map(|p| cosine_similarity(p.a, p.b))
        .collect::<Result<Vec<f64>>>()?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    Ok(UtilityReport {
        pearson: pearson(&cos, &gold)?,
        num_pairs: pairs.len(),
    })
}

/// Leakage reduction per unit of utility lost.
pub fn tradeoff_rate(leak_before: f64, leak_after: f64, util_before: f64, util_after: f64) -> Result<f64> {
    let d_util = util_before - util_after;
    if !(d_util > 0.0) {
        return Err(Error::UndefinedRate(d_util));
    }
    Ok((leak_before - leak_after) / d_util)
}
