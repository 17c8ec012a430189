//! Multi-label token classifier (the MLC attacker) and Integrated Gradients.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nn::{bce_from_logit, sigmoid, Adam, Mlp};
use crate::numkit::{DiagonalPD, Rng};
use crate::{Error, Result};

/// Default decision threshold; a token is predicted when `p >= threshold`.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_IG_STEPS: usize = 64;

/// Feedforward multi-label attacker: one sigmoid output per vocabulary token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub vocabulary: Vec<String>,
    pub hidden: Vec<usize>,
    pub network: Mlp,
}

impl AttackModel {
    pub fn new(vocabulary: Vec<String>, network: Mlp) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::Empty("attack vocabulary"));
        }
        if network.output_dim() != vocabulary.len() {
            return Err(Error::dim(
                "attack output width",
                vocabulary.len(),
                network.output_dim(),
            ));
        }
        let sizes = network.sizes();
        let hidden = sizes[1..sizes.len() - 1].to_vec();
        Ok(AttackModel {
            vocabulary,
            hidden,
            network,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.vocabulary.iter().position(|t| t == token)
    }

    /// Per-token probabilities, in vocabulary order.
    pub fn probabilities(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.input_dim() {
            return Err(Error::dim("attack input", self.input_dim(), embedding.len()));
        }
        Ok(self.network.forward(embedding).into_iter().map(sigmoid).collect())
    }

    /// Probability of `token` and its gradient with respect to the input.
    pub fn token_probability_gradient(&self, embedding: &[f64], token: usize) -> (f64, Vec<f64>) {
        let trace = self.network.forward_trace(embedding);
        let p = sigmoid(trace.logits()[token]);
        let mut seed = vec![0.0; self.vocabulary.len()];
        seed[token] = p * (1.0 - p);
        let mut scratch = vec![0.0; self.network.params().len()];
        let grad = self.network.backward(&trace, &seed, &mut scratch);
        (p, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for AttackTrainConfig {
    fn default() -> Self {
        AttackTrainConfig {
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            hidden: vec![512, 256, 128],
        }
    }
}

impl AttackTrainConfig {
    /// Hidden widths used for desk-scale runs.
    pub const SHRUNK_HIDDEN: [usize; 3] = [32, 16, 8];

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be > 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::param("batch size and epochs must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// One training example: an embedding and the tokens present in its text.
#[derive(Debug, Clone, Copy)]
pub struct LabeledEmbedding<'a> {
    pub embedding: &'a [f64],
    pub tokens: &'a BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackTraining {
    pub model: AttackModel,
    /// Mean per-example loss for each epoch.
    pub loss_history: Vec<f64>,
}

fn targets(vocab: &[String], tokens: &BTreeSet<String>) -> Vec<f64> {
    vocab
        .iter()
        .map(|t| if tokens.contains(t) { 1.0 } else { 0.0 })
        .collect()
}

/// Summed multi-label BCE over a batch with parameter and input gradients.
#[derive(Debug, Clone)]
pub struct AttackGradient {
    pub loss: f64,
    pub params: Vec<f64>,
    /// Input gradient for each example of the batch.
    pub inputs: Vec<Vec<f64>>,
}

pub fn attack_loss_gradient(model: &AttackModel, batch: &[LabeledEmbedding<'_>]) -> Result<AttackGradient> {
    let mut params = vec![0.0; model.network.params().len()];
    let mut inputs = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    for ex in batch {
        if ex.embedding.len() != model.input_dim() {
            return Err(Error::dim("attack input", model.input_dim(), ex.embedding.len()));
        }
        let y = targets(&model.vocabulary, ex.tokens);
        let trace = model.network.forward_trace(ex.embedding);
        let mut d_logits = Vec::with_capacity(y.len());
        for (z, t) in trace.logits().iter().zip(&y) {
            let (l, d) = bce_from_logit(*z, *t);
            loss += l;
            d_logits.push(d);
        }
        inputs.push(model.network.backward(&trace, &d_logits, &mut params));
    }
    Ok(AttackGradient {
        loss,
        params,
        inputs,
    })
}

/// Train the attacker with multi-label BCE and Adam. Deterministic per seed.
pub fn train_attack(
    data: &[LabeledEmbedding<'_>],
    vocabulary: &[String],
    cfg: &AttackTrainConfig,
) -> Result<AttackTraining> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("attack training data"));
    }
    if vocabulary.is_empty() {
        return Err(Error::Empty("attack vocabulary"));
    }
    let n = data[0].embedding.len();
    if n == 0 {
        return Err(Error::param("embedding dimension must be positive"));
    }
    let root = Rng::seed_from(cfg.seed);
    let mut init_rng = root.split("init");
    let mut order_rng = root.split("order");
    let mut sizes = vec![n];
    sizes.extend(&cfg.hidden);
    sizes.push(vocabulary.len());
    let network = Mlp::new(&sizes, &mut init_rng)?;
    let mut model = AttackModel::new(vocabulary.to_vec(), network)?;
    let mut opt = Adam::new(model.network.params().len(), cfg.learning_rate);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<LabeledEmbedding<'_>> = chunk.iter().map(|&i| data[i]).collect();
            let g = attack_loss_gradient(&model, &batch)?;
            if !g.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    param_norms: vec![("attack".into(), model.network.param_norm())],
                });
            }
            opt.step(model.network.params_mut(), &g.params);
            total += g.loss;
        }
        loss_history.push(total / data.len() as f64);
    }
    Ok(AttackTraining {
        model,
        loss_history,
    })
}

/// Tokens predicted present and the probability of every vocabulary token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub tokens: BTreeSet<String>,
    pub probabilities: BTreeMap<String, f64>,
}

/// Threshold the attacker's outputs; `p >= threshold` counts as present.
pub fn predict_tokens(model: &AttackModel, embedding: &[f64], threshold: f64) -> Result<TokenPrediction> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let probs = model.probabilities(embedding)?;
    let mut tokens = BTreeSet::new();
    let mut probabilities = BTreeMap::new();
    for (t, p) in model.vocabulary.iter().zip(probs) {
        if p >= threshold {
            tokens.insert(t.clone());
        }
        probabilities.insert(t.clone(), p);
    }
    Ok(TokenPrediction {
        tokens,
        probabilities,
    })
}

/// Signed Integrated Gradients of a scalar function along the straight path
/// from `baseline` to `x`, right Riemann sum with `steps` points.
pub fn integrated_gradients_with<G>(grad: G, x: &[f64], baseline: &[f64], steps: usize) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if steps == 0 {
        return Err(Error::param("integrated gradients needs at least one step"));
    }
    if baseline.len() != x.len() {
        return Err(Error::dim("integrated gradients baseline", x.len(), baseline.len()));
    }
    let n = x.len();
    let mut acc = vec![0.0; n];
    let mut point = vec![0.0; n];
    for k in 1..=steps {
        let alpha = k as f64 / steps as f64;
        for i in 0..n {
            point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        }
        for (a, g) in acc.iter_mut().zip(grad(&point)) {
            *a += g;
        }
    }
    Ok(acc
        .iter()
        .zip(x.iter().zip(baseline))
        .map(|(a, (xi, bi))| (xi - bi) * a / steps as f64)
        .collect())
}

/// Per-dimension attribution magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionProfile {
    pub scores: Vec<f64>,
}

impl AttributionProfile {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("attribution scores must be finite and >= 0"));
        }
        Ok(AttributionProfile { scores })
    }
}

/// Signed IG of the probability of `token`.
pub fn integrated_gradients_signed(
    model: &AttackModel,
    embedding: &[f64],
    token: &str,
    steps: usize,
    baseline: &[f64],
) -> Result<Vec<f64>> {
    let idx = model
        .token_index(token)
        .ok_or_else(|| Error::UnknownToken(token.into()))?;
    if embedding.len() != model.input_dim() {
        return Err(Error::dim("attack input", model.input_dim(), embedding.len()));
    }
    integrated_gradients_with(
        |p| model.token_probability_gradient(p, idx).1,
        embedding,
        baseline,
        steps,
    )
}

/// Absolute IG attributions of `token`'s probability.
pub fn integrated_gradients(
    model: &AttackModel,
    embedding: &[f64],
    token: &str,
    steps: usize,
    baseline: &[f64],
) -> Result<AttributionProfile> {
    let signed = integrated_gradients_signed(model, embedding, token, steps, baseline)?;
    AttributionProfile::new(signed.into_iter().map(f64::abs).collect())
}

/// Average profiles and calibrate to a trace-`n` sensitivity matrix with the
/// same normalize / add-delta / renormalize pipeline as the neuron mask.
pub fn attribution_to_sigma(profiles: &[AttributionProfile], delta: f64) -> Result<DiagonalPD> {
    let first = profiles.first().ok_or(Error::Empty("attribution profiles"))?;
    let n = first.scores.len();
    let mut mean = vec![0.0; n];
    for p in profiles {
        if p.scores.len() != n {
            return Err(Error::dim("attribution profile", n, p.scores.len()));
        }
        for (m, s) in mean.iter_mut().zip(&p.scores) {
            *m += s;
        }
    }
    let k = profiles.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    DiagonalPD::from_profile(&mean, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn vocab(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn ig_exact_for_linear_functions() {
        let w = [0.5, -2.0, 3.0];
        let x = [1.0, 2.0, -1.0];
        let b = [0.2, 0.0, 1.0];
        for steps in [1, 3, 64] {
            let ig = integrated_gradients_with(|_| w.to_vec(), &x, &b, steps).unwrap();
            for i in 0..3 {
                assert!((ig[i] - w[i] * (x[i] - b[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ig_at_baseline_is_zero() {
        let mut rng = Rng::seed_from(1);
        let net = Mlp::new(&[4, 6, 2], &mut rng).unwrap();
        let m = AttackModel::new(vocab(&["a", "b"]), net).unwrap();
        let x = [0.3, 0.1, -0.2, 0.9];
        let p = integrated_gradients(&m, &x, "b", 16, &x).unwrap();
        assert!(p.scores.iter().all(|s| *s == 0.0));
        assert!(matches!(
            integrated_gradients(&m, &x, "zzz", 16, &[0.0; 4]),
            Err(Error::UnknownToken(_))
        ));
    }

    #[test]
    fn ig_completeness() {
        let mut rng = Rng::seed_from(12);
        let net = Mlp::new(&[5, 8, 4, 1], &mut rng).unwrap();
        let m = AttackModel::new(vocab(&["t"]), net).unwrap();
        let x = [0.8, -0.4, 1.2, 0.1, -0.9];
        let b = [0.0; 5];
        let ig = integrated_gradients_signed(&m, &x, "t", 512, &b).unwrap();
        let total: f64 = ig.iter().sum();
        let fx = m.probabilities(&x).unwrap()[0];
        let fb = m.probabilities(&b).unwrap()[0];
        assert!((total - (fx - fb)).abs() < 1e-2, "{total} vs {}", fx - fb);
    }

    #[test]
    fn threshold_tie_is_inclusive() {
        // zero network: every probability is exactly 0.5.
        let net = Mlp::from_parts(vec![2, 1], vec![0.0; 3]).unwrap();
        let m = AttackModel::new(vocab(&["a"]), net).unwrap();
        let p = predict_tokens(&m, &[1.0, 1.0], 0.5).unwrap();
        assert!(p.tokens.contains("a"));
        assert_eq!(p.probabilities["a"], 0.5);
    }

    #[test]
    fn very_negative_logits_predict_nothing() {
        let net = Mlp::from_parts(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0, -800.0, -800.0]).unwrap();
        let m = AttackModel::new(vocab(&["a", "b"]), net).unwrap();
        let p = predict_tokens(&m, &[1.0, 1.0], 0.5).unwrap();
        assert!(p.tokens.is_empty());
        assert!(p.probabilities.values().all(|v| *v < 1e-300));
        assert!(predict_tokens(&m, &[1.0], 0.5).is_err());
    }

    #[test]
    fn constant_labels_drive_output_to_one() {
        let tokens: BTreeSet<String> = ["a".to_string()].into_iter().collect();
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 1.0]).collect();
        let data: Vec<_> = xs
            .iter()
            .map(|x| LabeledEmbedding { embedding: x, tokens: &tokens })
            .collect();
        let cfg = AttackTrainConfig {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 8,
            hidden: vec![4],
            seed: 1,
        };
        let t = train_attack(&data, &vocab(&["a"]), &cfg).unwrap();
        for x in &xs {
            assert!(t.model.probabilities(x).unwrap()[0] > 0.99);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let tokens: BTreeSet<String> = ["a".to_string()].into_iter().collect();
        let none = BTreeSet::new();
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        let data: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| LabeledEmbedding {
                embedding: x,
                tokens: if i % 2 == 0 { &tokens } else { &none },
            })
            .collect();
        let cfg = AttackTrainConfig {
            epochs: 3,
            hidden: vec![4, 3],
            ..Default::default()
        };
        let a = train_attack(&data, &vocab(&["a"]), &cfg).unwrap();
        let b = train_attack(&data, &vocab(&["a"]), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attribution_sigma_examples() {
        let uniform = AttributionProfile::new(vec![0.3; 4]).unwrap();
        let s = attribution_to_sigma(&[uniform], 1e-6).unwrap();
        assert!(s.diag().iter().all(|d| (d - 1.0).abs() < 1e-12));

        let spike = AttributionProfile::new(vec![0.0, 0.0, 2.5, 0.0]).unwrap();
        let s = attribution_to_sigma(&[spike], 1e-6).unwrap();
        assert!((s.diag()[2] - 4.0).abs() < 1e-5);
        assert!(s.diag()[0] < 2e-6);
        assert!((s.trace() - 4.0).abs() < 1e-12);

        let a = AttributionProfile::new(vec![1.0, 0.0]).unwrap();
        let b = AttributionProfile::new(vec![0.0, 1.0]).unwrap();
        let s = attribution_to_sigma(&[a, b], 1e-6).unwrap();
        assert!(s.diag().iter().all(|d| (d - 1.0).abs() < 1e-12));

        let short = AttributionProfile::new(vec![1.0]).unwrap();
        let long = AttributionProfile::new(vec![1.0, 1.0]).unwrap();
        assert!(attribution_to_sigma(&[short, long], 1e-6).is_err());
        assert!(attribution_to_sigma(&[], 1e-6).is_err());
    }
}
