//! Hard-concrete neuron masks: learning which dimensions carry a concept.
//!
//! Each dimension `i` has a gate with location `log_alpha[i]` and temperature
//! `beta[i] = exp(log_beta[i])`. During training a gate is sampled as
//!
//! ```text
//! s = sigmoid((logit(u) + log_alpha) / beta),  u ~ U(0, 1)
//! m = clamp(s * (XI - GAMMA) + GAMMA, 0, 1)
//! ```
//!
//! and at inference it is the deterministic `clamp(sigmoid(log_alpha) * (XI -
//! GAMMA) + GAMMA, 0, 1)`. A classifier is trained jointly on the masked
//! embeddings `x * m` to tell positives from their concept-free negatives,
//! with an expected-L0 penalty pushing gates closed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::nn::{bce_from_logit, sigmoid, Adam, Mlp};
use crate::numkit::{euclidean_norm, DiagonalPD, Rng};
use crate::{Error, Result};

/// Upper stretch limit of the hard-concrete distribution.
pub const XI: f64 = 1.1;
/// Lower stretch limit of the hard-concrete distribution.
pub const GAMMA: f64 = -0.1;

const INIT_LOG_BETA: f64 = -0.405_465_108_108_164_4; // ln(2/3)

/// Written at the top of every training log.
pub const REGULARIZER_NOTE: &str = "L_reg is the positive expected fraction of active gates, \
(1/n) sum_i sigmoid(log_alpha_i - beta_i * ln(-gamma/xi)); the leading minus sign found in \
some statements of this objective is dropped so that lambda > 0 induces sparsity";

/// Learnable gate parameters, one per embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronMask {
    pub log_alpha: Vec<f64>,
    pub log_beta: Vec<f64>,
}

impl NeuronMask {
    /// Gates half open (`log_alpha = 0`) with `beta = 2/3`.
    pub fn new(n: usize) -> Self {
        NeuronMask {
            log_alpha: vec![0.0; n],
            log_beta: vec![INIT_LOG_BETA; n],
        }
    }

    pub fn from_parts(log_alpha: Vec<f64>, log_beta: Vec<f64>) -> Result<Self> {
        if log_alpha.len() != log_beta.len() {
            return Err(Error::dim("mask log_beta", log_alpha.len(), log_beta.len()));
        }
        if log_alpha.iter().chain(&log_beta).any(|v| !v.is_finite()) {
            return Err(Error::param("mask parameters must be finite"));
        }
        Ok(NeuronMask {
            log_alpha,
            log_beta,
        })
    }

    pub fn len(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alpha.is_empty()
    }
}

/// Hard-concrete sample for a given uniform draw `u` in `(0, 1)`.
pub fn gate_from_uniform(u: f64, log_alpha: f64, log_beta: f64) -> (f64, f64) {
    let beta = libm::exp(log_beta);
    let t = (libm::log(u) - libm::log1p(-u) + log_alpha) / beta;
    let s = sigmoid(t);
    (s, stretch(s))
}

fn stretch(s: f64) -> f64 {
    (s * (XI - GAMMA) + GAMMA).clamp(0.0, 1.0)
}

/// Draw `(s, m)` for one gate.
pub fn sample_gate(rng: &mut Rng, log_alpha: f64, log_beta: f64) -> (f64, f64) {
    gate_from_uniform(rng.uniform_open(), log_alpha, log_beta)
}

pub fn inference_gate(log_alpha: f64) -> f64 {
    stretch(sigmoid(log_alpha))
}

/// Deterministic inference-time gates in `[0, 1]`.
pub fn inference_mask(mask: &NeuronMask) -> Vec<f64> {
    mask.log_alpha.iter().map(|a| inference_gate(*a)).collect()
}

fn masked(x: &[f64], gates: &[f64]) -> Vec<f64> {
    x.iter().zip(gates).map(|(a, g)| a * g).collect()
}

/// Summed binary cross-entropy of the classifier on masked embeddings,
/// positives labeled 1 and negatives 0.
pub fn classification_loss<P, N>(
    classifier: &Mlp,
    gates: &[f64],
    positives: &[P],
    negatives: &[N],
) -> Result<f64>
where
    P: AsRef<[f64]>,
    N: AsRef<[f64]>,
{
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("classification batch"));
    }
    let n = classifier.input_dim();
    if gates.len() != n {
        return Err(Error::dim("mask gates", n, gates.len()));
    }
    let mut total = 0.0;
    for (x, y) in positives
        .iter()
        .map(|p| (p.as_ref(), 1.0))
        .chain(negatives.iter().map(|q| (q.as_ref(), 0.0)))
    {
        if x.len() != n {
            return Err(Error::dim("classification input", n, x.len()));
        }
        let logit = classifier.forward(&masked(x, gates))[0];
        total += bce_from_logit(logit, y).0;
    }
    Ok(total)
}

fn log_ratio() -> f64 {
    libm::log(-GAMMA / XI)
}

/// Expected fraction of active gates, in `[0, 1]`.
pub fn regularization_loss(mask: &NeuronMask) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let c = log_ratio();
    mask.log_alpha
        .iter()
        .zip(&mask.log_beta)
        .map(|(a, b)| sigmoid(a - libm::exp(*b) * c))
        .sum::<f64>()
        / mask.len() as f64
}

/// Value and gradients of `L_cls + lambda * L_reg` for one minibatch.
#[derive(Debug, Clone)]
pub struct ObjectiveGradient {
    pub total: f64,
    pub classification: f64,
    pub regularization: f64,
    pub classifier: Vec<f64>,
    pub log_alpha: Vec<f64>,
    pub log_beta: Vec<f64>,
}

/// Evaluate the mask objective on matched `(positive, negative)` pairs.
///
/// `uniforms[k]` holds the per-dimension uniform draws for pair `k`; both
/// members of a pair share that gate sample.
pub fn objective_with_uniforms(
    classifier: &Mlp,
    mask: &NeuronMask,
    pairs: &[(&[f64], &[f64])],
    uniforms: &[Vec<f64>],
    lambda: f64,
) -> Result<ObjectiveGradient> {
    let n = mask.len();
    if classifier.input_dim() != n {
        return Err(Error::dim("classifier input", n, classifier.input_dim()));
    }
    if uniforms.len() != pairs.len() {
        return Err(Error::dim("gate samples", pairs.len(), uniforms.len()));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("mask minibatch"));
    }
    let mut g_theta = vec![0.0; classifier.params().len()];
    let mut g_alpha = vec![0.0; n];
    let mut g_beta = vec![0.0; n];
    let mut cls = 0.0;

    let mut gates = vec![0.0; n];
    let mut d_gate = vec![0.0; n];
    let mut t_vals = vec![0.0; n];
    let mut s_vals = vec![0.0; n];
    for ((pos, neg), us) in pairs.iter().zip(uniforms) {
        if pos.len() != n || neg.len() != n {
            return Err(Error::dim(
                "mask minibatch embedding",
                n,
                if pos.len() != n { pos.len() } else { neg.len() },
            ));
        }
        if us.len() != n {
            return Err(Error::dim("gate uniforms", n, us.len()));
        }
        for i in 0..n {
            let beta = libm::exp(mask.log_beta[i]);
            let u = us[i];
            let t = (libm::log(u) - libm::log1p(-u) + mask.log_alpha[i]) / beta;
            let s = sigmoid(t);
            t_vals[i] = t;
            s_vals[i] = s;
            gates[i] = stretch(s);
        }
        d_gate.iter_mut().for_each(|g| *g = 0.0);
        for (x, y) in [(*pos, 1.0), (*neg, 0.0)] {
            let input = masked(x, &gates);
            let trace = classifier.forward_trace(&input);
            let (loss, dz) = bce_from_logit(trace.logits()[0], y);
            cls += loss;
            if dz != 0.0 {
                let dx = classifier.backward(&trace, &[dz], &mut g_theta);
                for i in 0..n {
                    d_gate[i] += dx[i] * x[i];
                }
            }
        }
        for i in 0..n {
            let raw = s_vals[i] * (XI - GAMMA) + GAMMA;
            if raw <= 0.0 || raw >= 1.0 {
                continue;
            }
            let s = s_vals[i];
            let d_t = d_gate[i] * (XI - GAMMA) * s * (1.0 - s);
            let beta = libm::exp(mask.log_beta[i]);
            g_alpha[i] += d_t / beta;
            g_beta[i] += -d_t * t_vals[i];
        }
    }

    let c = log_ratio();
    let nf = n as f64;
    let mut reg = 0.0;
    for i in 0..n {
        let beta = libm::exp(mask.log_beta[i]);
        let r = sigmoid(mask.log_alpha[i] - beta * c);
        reg += r;
        let dr = lambda * r * (1.0 - r) / nf;
        g_alpha[i] += dr;
        g_beta[i] += dr * (-beta * c);
    }
    reg /= nf;

    Ok(ObjectiveGradient {
        total: cls + lambda * reg,
        classification: cls,
        regularization: reg,
        classifier: g_theta,
        log_alpha: g_alpha,
        log_beta: g_beta,
    })
}

/// Hyperparameters for [`train_mask`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    /// Matched pairs per minibatch.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub delta: f64,
    /// Hidden widths of the discriminating classifier.
    pub hidden: Vec<usize>,
}

impl Default for MaskTrainConfig {
    fn default() -> Self {
        MaskTrainConfig {
            lambda: 1e-3,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            delta: 1e-6,
            hidden: vec![256, 128],
        }
    }
}

impl MaskTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda must be >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be > 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::param("batch size and epochs must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param("delta must be > 0"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Batch-averaged losses of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub classification: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub header: String,
    pub epochs: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskTraining {
    pub mask: NeuronMask,
    pub classifier: Mlp,
    pub log: TrainingLog,
}

/// Jointly train the classifier and the gate parameters with Adam.
///
/// Every minibatch holds matched pairs; each pair gets a fresh gate sample for
/// every dimension. Deterministic for a fixed seed.
pub fn train_mask(paired: &PairedDataset, cfg: &MaskTrainConfig) -> Result<MaskTraining> {
    cfg.validate()?;
    if paired.is_empty() {
        return Err(Error::Empty("paired dataset"));
    }
    let n = paired.dimension;
    if n == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    let root = Rng::seed_from(cfg.seed);
    let mut init_rng = root.split("init");
    let mut order_rng = root.split("order");
    let mut gate_rng = root.split("gates");

    let mut sizes = vec![n];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut classifier = Mlp::new(&sizes, &mut init_rng)?;
    let mut mask = NeuronMask::new(n);

    let mut opt_theta = Adam::new(classifier.params().len(), cfg.learning_rate);
    let mut opt_alpha = Adam::new(n, cfg.learning_rate);
    let mut opt_beta = Adam::new(n, cfg.learning_rate);

    let mut order: Vec<usize> = (0..paired.len()).collect();
    let mut log = TrainingLog {
        header: REGULARIZER_NOTE.to_string(),
        epochs: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let (mut sum_total, mut sum_cls, mut sum_reg, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs: Vec<(&[f64], &[f64])> = chunk
                .iter()
                .map(|&k| {
                    (
                        paired.positives[k].embedding.as_slice(),
                        paired.negatives[k].embedding.as_slice(),
                    )
                })
                .collect();
            let uniforms: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| (0..n).map(|_| gate_rng.uniform_open()).collect())
                .collect();
            let g = objective_with_uniforms(&classifier, &mask, &pairs, &uniforms, cfg.lambda)?;
            if !g.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    param_norms: vec![
                        ("classifier".into(), classifier.param_norm()),
                        ("log_alpha".into(), euclidean_norm(&mask.log_alpha)),
                        ("log_beta".into(), euclidean_norm(&mask.log_beta)),
                    ],
                });
            }
            opt_theta.step(classifier.params_mut(), &g.classifier);
            opt_alpha.step(&mut mask.log_alpha, &g.log_alpha);
            opt_beta.step(&mut mask.log_beta, &g.log_beta);
            sum_total += g.total;
            sum_cls += g.classification;
            sum_reg += g.regularization;
            batches += 1;
        }
        let b = batches as f64;
        log.epochs.push(EpochLoss {
            epoch,
            total: sum_total / b,
            classification: sum_cls / b,
            regularization: sum_reg / b,
        });
    }
    Ok(MaskTraining {
        mask,
        classifier,
        log,
    })
}

/// Fraction of pairs whose positive scores `>= 0.5` and negative `< 0.5`
/// under the inference-time mask, counted per record.
pub fn mask_accuracy(classifier: &Mlp, mask: &NeuronMask, paired: &PairedDataset) -> f64 {
    let gates = inference_mask(mask);
    let mut correct = 0usize;
    for (x, y) in paired
        .positives
        .iter()
        .map(|r| (r, true))
        .chain(paired.negatives.iter().map(|r| (r, false)))
    {
        let p = sigmoid(classifier.forward(&masked(&x.embedding, &gates))[0]);
        if (p >= 0.5) == y {
            correct += 1;
        }
    }
    correct as f64 / (2 * paired.len()) as f64
}

/// Sensitivity matrix from gate values: normalize the gates to sum to `n`
/// (all-zero gates become uniform), add `delta`, renormalize to trace `n`.
pub fn mask_to_sigma(gates: &[f64], delta: f64) -> Result<DiagonalPD> {
    if gates.is_empty() {
        return Err(Error::Empty("mask gates"));
    }
    if let Some((i, g)) = gates
        .iter()
        .enumerate()
        .find(|(_, g)| !(**g >= 0.0 && **g <= 1.0))
    {
        return Err(Error::param(format!("gate {i} outside [0, 1]: {g}")));
    }
    DiagonalPD::from_profile(gates, delta)
}

/// Indices of the `k` largest values, ties broken by lower index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticPlan};
    use proptest::prelude::*;
    use crate::numkit::Rng;

    #[test]
    fn gate_at_midpoint() {
        let (s, m) = gate_from_uniform(0.5, 0.0, 0.0);
        assert!((s - 0.5).abs() < 1e-15);
        assert!((m - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gate_bernoulli_limit() {
        // beta -> 0: any u > 0.5 with log_alpha = 0 opens the gate fully.
        for u in [0.51, 0.7, 0.99] {
            let (s, m) = gate_from_uniform(u, 0.0, -40.0);
            assert!(s > 1.0 - 1e-12);
            assert_eq!(m, 1.0);
        }
        let (_, m) = gate_from_uniform(0.49, 0.0, -40.0);
        assert_eq!(m, 0.0);
    }

    #[test]
    fn sampled_gate_mean_matches_quadrature() {
        let (la, lb) = (2.0, libm::log(0.5));
        // Independent oracle: midpoint rule over a fine u-grid.
        let grid = 2_000_000;
        let oracle: f64 = (0..grid)
            .map(|k| {
                let u = (k as f64 + 0.5) / grid as f64;
                let beta = 0.5;
                let s = 1.0 / (1.0 + libm::exp(-(libm::log(u / (1.0 - u)) + la) / beta));
                (s * 1.2 - 0.1).clamp(0.0, 1.0)
            })
            .sum::<f64>()
            / grid as f64;
        let mut rng = Rng::seed_from(77);
        let mc: f64 = (0..100_000).map(|_| sample_gate(&mut rng, la, lb).1).sum::<f64>() / 1e5;
        assert!((mc - oracle).abs() < 0.02, "{mc} vs {oracle}");
    }

    #[test]
    fn inference_gate_examples() {
        assert_eq!(inference_gate(20.0), 1.0);
        assert_eq!(inference_gate(-20.0), 0.0);
        assert!((inference_gate(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn regularizer_examples() {
        let single = NeuronMask::from_parts(vec![0.0], vec![0.0]).unwrap();
        assert!((regularization_loss(&single) - 11.0 / 12.0).abs() < 1e-12);
        let closed = NeuronMask::from_parts(vec![-1e3; 4], vec![0.0; 4]).unwrap();
        assert!(regularization_loss(&closed) < 1e-12);
        let open = NeuronMask::from_parts(vec![1e3; 4], vec![0.0; 4]).unwrap();
        assert!((regularization_loss(&open) - 1.0).abs() < 1e-12);
    }

    fn constant_classifier(n: usize, bias: f64) -> Mlp {
        // n -> 1, zero weights: output sigmoid(bias) everywhere.
        let mut params = vec![0.0; n + 1];
        params[n] = bias;
        Mlp::from_parts(vec![n, 1], params).unwrap()
    }

    #[test]
    fn classification_loss_half() {
        let c = constant_classifier(3, 0.0);
        let pos = [vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]];
        let neg = [vec![0.5, 0.5, 0.5], vec![-1.0, 0.0, 2.0]];
        let l = classification_loss(&c, &[1.0; 3], &pos, &neg).unwrap();
        assert!((l - 4.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn classification_loss_perfect() {
        // weight 100 on x0: positives have x0 = 1, negatives x0 = -1.
        let net = Mlp::from_parts(vec![2, 1], vec![100.0, 0.0, 0.0]).unwrap();
        let pos = [vec![1.0, 0.0], vec![1.0, 5.0]];
        let neg = [vec![-1.0, 0.0], vec![-1.0, 5.0]];
        let l = classification_loss(&net, &[1.0, 1.0], &pos, &neg).unwrap();
        let expect = 4.0 * -libm::log(1.0 - 1e-7);
        assert!((l - expect).abs() < 1e-15, "{l} vs {expect}");
        assert!((l - 4e-7).abs() < 1e-12);
    }

    #[test]
    fn zero_mask_sees_only_bias_path() {
        let mut rng = Rng::seed_from(3);
        let net = Mlp::new(&[3, 4, 1], &mut rng).unwrap();
        let pos = [vec![1.0, 2.0, 3.0]];
        let neg = [vec![-4.0, 0.0, 1.0]];
        let l = classification_loss(&net, &[0.0; 3], &pos, &neg).unwrap();
        let z = net.forward(&[0.0; 3])[0];
        let expect = bce_from_logit(z, 1.0).0 + bce_from_logit(z, 0.0).0;
        assert!((l - expect).abs() < 1e-14);
    }

    #[test]
    fn classification_loss_errors() {
        let c = constant_classifier(3, 0.0);
        let pos = [vec![1.0, 2.0]];
        let neg = [vec![1.0, 2.0, 3.0]];
        assert!(matches!(
            classification_loss(&c, &[1.0; 3], &pos, &neg),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty: [Vec<f64>; 0] = [];
        assert!(classification_loss(&c, &[1.0; 3], &empty, &neg).is_err());
    }

    #[test]
    fn mask_to_sigma_examples() {
        let s = mask_to_sigma(&[1.0; 4], 1e-6).unwrap();
        assert!(s.diag().iter().all(|d| (d - 1.0).abs() < 1e-15));
        let z = mask_to_sigma(&[0.0; 4], 1e-6).unwrap();
        assert!(z.diag().iter().all(|d| (d - 1.0).abs() < 1e-15));

        let delta = 1e-6;
        let s = mask_to_sigma(&[1.0, 0.0, 0.0, 0.0], delta).unwrap();
        // (4 + d, d, d, d) scaled by 4 / (4 + 4d)
        let scale = 4.0 / (4.0 + 4.0 * delta);
        assert!((s.diag()[0] - (4.0 + delta) * scale).abs() < 1e-14);
        for d in &s.diag()[1..] {
            assert!((d - delta * scale).abs() < 1e-20);
        }
        assert!((s.trace() - 4.0).abs() < 1e-12);
        assert!(mask_to_sigma(&[], delta).is_err());
        assert!(mask_to_sigma(&[1.5], delta).is_err());
    }

    #[test]
    fn top_k_orders_by_value() {
        assert_eq!(top_k(&[0.1, 0.9, 0.5, 0.9], 3), vec![1, 3, 2]);
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let d = generate_synthetic(&SyntheticPlan::new(6, 30, [1], 2.0, 0.3, 5)).unwrap();
        let cfg = MaskTrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden: vec![8, 4],
            seed: 9,
            ..Default::default()
        };
        let a = train_mask(&d, &cfg).unwrap();
        let b = train_mask(&d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.epochs.len(), 3);
        assert!(a.log.header.contains("sparsity"));
    }

    #[test]
    fn recovers_planted_dims_with_defaults() {
        let d = generate_synthetic(&SyntheticPlan::new(16, 200, [3, 9], 2.0, 0.3, 11)).unwrap();
        let cfg = MaskTrainConfig {
            seed: 1,
            ..Default::default()
        };
        let t = train_mask(&d, &cfg).unwrap();
        let mut top = top_k(&inference_mask(&t.mask), 2);
        top.sort();
        assert_eq!(top, vec![3, 9]);
    }

    #[test]
    fn huge_lambda_closes_gates() {
        let d = generate_synthetic(&SyntheticPlan::new(8, 100, [2], 2.0, 0.3, 4)).unwrap();
        let cfg = MaskTrainConfig {
            lambda: 1000.0,
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 32,
            hidden: vec![16, 8],
            seed: 2,
            ..Default::default()
        };
        let t = train_mask(&d, &cfg).unwrap();
        let sum: f64 = inference_mask(&t.mask).iter().sum();
        assert!(sum < 0.05 * 8.0, "gate mass {sum}");
    }

    #[test]
    fn zero_lambda_separates_training_pairs() {
        let d = generate_synthetic(&SyntheticPlan::new(8, 100, [2, 5], 2.0, 0.3, 4)).unwrap();
        let cfg = MaskTrainConfig {
            lambda: 0.0,
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            hidden: vec![32, 16],
            seed: 3,
            ..Default::default()
        };
        let t = train_mask(&d, &cfg).unwrap();
        let acc = mask_accuracy(&t.classifier, &t.mask, &d);
        assert!(acc > 0.99, "accuracy {acc}");
    }

    proptest! {
        #[test]
        fn gates_stay_in_unit_interval(
            u in 1e-12f64..(1.0 - 1e-12),
            la in -50.0f64..50.0,
            lb in -10.0f64..5.0,
        ) {
            let (s, m) = gate_from_uniform(u, la, lb);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((0.0..=1.0).contains(&m));
            let g = inference_gate(la);
            prop_assert!((0.0..=1.0).contains(&g));
        }

        #[test]
        fn inference_gate_monotone(a in -30.0f64..30.0, d in 0.0f64..10.0) {
            prop_assert!(inference_gate(a) <= inference_gate(a + d));
        }

        #[test]
        fn regularizer_in_unit_interval(
            la in proptest::collection::vec(-100.0f64..100.0, 1..16),
            lb_seed in -5.0f64..5.0,
        ) {
            let lb = vec![lb_seed; la.len()];
            let r = regularization_loss(&NeuronMask::from_parts(la, lb).unwrap());
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn sigma_contract(gates in proptest::collection::vec(0.0f64..=1.0, 1..64)) {
            let s = mask_to_sigma(&gates, 1e-6).unwrap();
            prop_assert!(s.diag().iter().all(|d| *d > 0.0));
            prop_assert!((s.trace() - gates.len() as f64).abs() < 1e-9);
        }
    }
}
