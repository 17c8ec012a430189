//! Embedding records, concept specifications and paired (D+/D-) datasets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numkit::{sample_standard_normal, Rng};
use crate::{Error, Result};

/// One text unit: its embedding plus concept-token annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub concept_tokens: BTreeSet<String>,
    #[serde(default)]
    pub pair_id: Option<String>,
    #[serde(default)]
    pub gold_label: Option<f64>,
    #[serde(default)]
    pub text: Option<String>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, embedding: Vec<f64>) -> Self {
        EmbeddingRecord {
            id: id.into(),
            embedding,
            concept_tokens: BTreeSet::new(),
            pair_id: None,
            gold_label: None,
            text: None,
        }
    }
}

/// Validate a record collection and return its common dimension.
///
/// The dimension is taken from the first record. Pair ids, when present,
/// must occur exactly twice. An empty collection has dimension 0.
pub fn validate_records(records: &[EmbeddingRecord]) -> Result<usize> {
    let Some(first) = records.first() else {
        return Ok(0);
    };
    let n = first.embedding.len();
    let mut pair_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        if r.embedding.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!("record {}", r.id),
                expected: n,
                found: r.embedding.len(),
            });
        }
        if let Some(index) = r.embedding.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                id: r.id.clone(),
                index,
            });
        }
        if let Some(p) = &r.pair_id {
            *pair_counts.entry(p.as_str()).or_default() += 1;
        }
    }
    let orphans: Vec<String> = pair_counts
        .into_iter()
        .filter(|(_, c)| *c != 2)
        .map(|(p, _)| p.to_string())
        .collect();
    if !orphans.is_empty() {
        return Err(Error::OrphanedPairs(orphans));
    }
    Ok(n)
}

/// A privacy concept: a name and the set of tokens that express it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub name: String,
    pub tokens: BTreeSet<String>,
}

impl ConceptSpec {
    pub fn new<I, S>(name: impl Into<String>, tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for t in tokens {
            let t = t.into();
            if !set.insert(t.clone()) {
                return Err(Error::param(format!("duplicate concept token {t:?}")));
            }
        }
        if set.is_empty() {
            return Err(Error::param("concept needs at least one token"));
        }
        Ok(ConceptSpec {
            name: name.into(),
            tokens: set,
        })
    }

    /// Case-sensitive exact membership.
    pub fn matches(&self, record: &EmbeddingRecord) -> bool {
        record.concept_tokens.iter().any(|t| self.tokens.contains(t))
    }
}

/// Matched positive (with concept) and negative (concept removed) records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset {
    pub positives: Vec<EmbeddingRecord>,
    pub negatives: Vec<EmbeddingRecord>,
    pub dimension: usize,
    pub concept: ConceptSpec,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    /// Positives followed by negatives.
    pub fn records(&self) -> impl Iterator<Item = &EmbeddingRecord> {
        self.positives.iter().chain(&self.negatives)
    }
}

/// Split records into matched pairs by `pair_id`.
///
/// Within each pair the record carrying a concept token is the positive; the
/// other must carry none. Positives keep the order of first appearance.
pub fn make_paired(records: &[EmbeddingRecord], concept: &ConceptSpec) -> Result<PairedDataset> {
    let dimension = validate_records(records)?;
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in records {
        let Some(p) = r.pair_id.as_deref() else {
            return Err(Error::ConceptViolation {
                id: r.id.clone(),
                reason: "record has no pair_id".into(),
            });
        };
        let g = groups.entry(p).or_default();
        if g.is_empty() {
            order.push(p);
        }
        g.push(r);
    }
    let mut positives = Vec::with_capacity(order.len());
    let mut negatives = Vec::with_capacity(order.len());
    for p in order {
        let g = &groups[p];
        let (a, b) = (g[0], g[1]);
        let (pos, neg) = match (concept.matches(a), concept.matches(b)) {
            (true, false) => (a, b),
            (false, true) => (b, a),
            (true, true) => {
                return Err(Error::ConceptViolation {
                    id: b.id.clone(),
                    reason: format!("negative of pair {p} carries concept tokens"),
                })
            }
            (false, false) => {
                return Err(Error::ConceptViolation {
                    id: a.id.clone(),
                    reason: format!("pair {p} has no record with a concept token"),
                })
            }
        };
        positives.push(pos.clone());
        negatives.push(neg.clone());
    }
    Ok(PairedDataset {
        positives,
        negatives,
        dimension,
        concept: concept.clone(),
    })
}

/// Recipe for a synthetic paired dataset with concept signal planted in
/// known dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlan {
    pub n: usize,
    pub num_pairs: usize,
    pub planted_dims: BTreeSet<usize>,
    pub signal_magnitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Concept name; also the single token tagged on positives.
    pub concept: String,
}

impl SyntheticPlan {
    pub fn new(
        n: usize,
        num_pairs: usize,
        planted_dims: impl IntoIterator<Item = usize>,
        signal_magnitude: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        SyntheticPlan {
            n,
            num_pairs,
            planted_dims: planted_dims.into_iter().collect(),
            signal_magnitude,
            noise_sigma,
            seed,
            concept: "sensitive".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("synthetic dimension must be positive"));
        }
        if self.planted_dims.is_empty() {
            return Err(Error::param("at least one planted dimension is required"));
        }
        if let Some(d) = self.planted_dims.iter().find(|d| **d >= self.n) {
            return Err(Error::param(format!(
                "planted dimension {d} out of range for n = {}",
                self.n
            )));
        }
        if !(self.signal_magnitude > 0.0 && self.signal_magnitude.is_finite()) {
            return Err(Error::param("signal magnitude must be > 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise sigma must be >= 0"));
        }
        if self.concept.is_empty() {
            return Err(Error::param("concept name must be nonempty"));
        }
        Ok(())
    }
}

/// Negatives are i.i.d. `N(0, sigma^2)`. Each positive is its negative plus
/// `signal_magnitude` on every planted dimension plus an independent
/// `N(0, sigma^2)` edit on every dimension, so `pos - neg` equals the planted
/// offset exactly when `sigma = 0`.
pub fn generate_synthetic(plan: &SyntheticPlan) -> Result<PairedDataset> {
    plan.validate()?;
    let mut rng = Rng::seed_from(plan.seed);
    let concept = ConceptSpec::new(plan.concept.clone(), [plan.concept.clone()])?;
    let mut positives = Vec::with_capacity(plan.num_pairs);
    let mut negatives = Vec::with_capacity(plan.num_pairs);
    for i in 0..plan.num_pairs {
        let base: Vec<f64> = sample_standard_normal(&mut rng, plan.n)
            .into_iter()
            .map(|z| z * plan.noise_sigma)
            .collect();
        let edit = sample_standard_normal(&mut rng, plan.n);
        let mut shifted: Vec<f64> = base
            .iter()
            .zip(&edit)
            .map(|(b, e)| b + e * plan.noise_sigma)
            .collect();
        for d in &plan.planted_dims {
            shifted[*d] += plan.signal_magnitude;
        }
        let pair = format!("pair-{i}");
        let mut pos = EmbeddingRecord::new(format!("pos-{i}"), shifted);
        pos.pair_id = Some(pair.clone());
        pos.concept_tokens.insert(plan.concept.clone());
        let mut neg = EmbeddingRecord::new(format!("neg-{i}"), base);
        neg.pair_id = Some(pair);
        positives.push(pos);
        negatives.push(neg);
    }
    Ok(PairedDataset {
        positives,
        negatives,
        dimension: plan.n,
        concept,
    })
}

/// Sentence-pair embeddings with graded similarity, for utility scoring.
///
/// Pair `k` has gold score `rho ~ U(0, 1)`; `a` is standard normal and
/// `b = rho * a + sqrt(1 - rho^2) * fresh`, both restricted to the dimensions
/// outside `inactive_dims` (which stay zero). Records are `sim-k-a`/`sim-k-b`
/// sharing pair id `sim-k` and the gold label.
pub fn generate_similarity_pairs(
    n: usize,
    count: usize,
    inactive_dims: &BTreeSet<usize>,
    seed: u64,
) -> Result<Vec<EmbeddingRecord>> {
    if n == 0 {
        return Err(Error::param("similarity dimension must be positive"));
    }
    if inactive_dims.len() >= n || inactive_dims.iter().any(|d| *d >= n) {
        return Err(Error::param("inactive dimensions must be a proper subset of 0..n"));
    }
    let mut rng = Rng::seed_from(seed);
    let mut out = Vec::with_capacity(2 * count);
    for k in 0..count {
        let rho = rng.uniform();
        let a = sample_standard_normal(&mut rng, n);
        let fresh = sample_standard_normal(&mut rng, n);
        let c = libm::sqrt(1.0 - rho * rho);
        let mut ea = vec![0.0; n];
        let mut eb = vec![0.0; n];
        for i in (0..n).filter(|i| !inactive_dims.contains(i)) {
            ea[i] = a[i];
            eb[i] = rho * a[i] + c * fresh[i];
        }
        let pair = format!("sim-{k}");
        for (suffix, emb) in [("a", ea), ("b", eb)] {
            let mut r = EmbeddingRecord::new(format!("{pair}-{suffix}"), emb);
            r.pair_id = Some(pair.clone());
            r.gold_label = Some(rho);
            out.push(r);
        }
    }
    Ok(out)
}
