//! Central finite-difference checks for the analytic gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::attack::{attack_loss_gradient, AttackModel, LabeledEmbedding};
use crate::mask::{objective_with_uniforms, NeuronMask};
use crate::nn::Mlp;
use crate::numkit::{sample_standard_normal, Rng};
use crate::Result;
use alloc::collections::BTreeSet;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if !analytic.is_finite() || !numeric.is_finite() {
        return f64::INFINITY;
    }
    let scale = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Outcome of one comparison run.
#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<String>,
    /// Coordinates skipped because a ReLU or clamp kink lies inside the step.
    pub kinks: usize,
}

impl GradCheckReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: Option<f64>) {
        let Some(numeric) = numeric else {
            self.kinks += 1;
            return;
        };
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = err;
            self.worst = Some(label());
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        if other.max_relative_error > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
    }

    pub fn passed(&self) -> bool {
        // A handful of kinks is expected; many would hide a broken gradient.
        self.checked > 0 && self.max_relative_error <= FD_TOLERANCE && self.kinks * 100 <= self.checked
    }
}

/// Central difference, or `None` when the one-sided slopes disagree, i.e. the
/// function is not differentiable within one step of `x`.
fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> Option<f64> {
    let (hi, mid, lo) = (f(x + FD_STEP), f(x), f(x - FD_STEP));
    let right = (hi - mid) / FD_STEP;
    let left = (mid - lo) / FD_STEP;
    let jump = (right - left).abs();
    if jump.is_finite() && jump > 1e-2 * right.abs().max(left.abs()) + 1e-4 {
        return None;
    }
    Some((hi - lo) / (2.0 * FD_STEP))
}

/// Fresh networks have zero biases, which can put ReLU inputs exactly on the
/// kink where one-sided and central differences disagree.
fn jitter(net: &mut Mlp, rng: &mut Rng) {
    let noise = sample_standard_normal(rng, net.params().len());
    for (p, z) in net.params_mut().iter_mut().zip(noise) {
        *p += 0.1 * z;
    }
}

fn normals(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    sample_standard_normal(rng, n).into_iter().map(|v| v * scale).collect()
}

/// Check every entry of the classifier, `log_alpha` and `log_beta` gradients
/// of the mask objective on a random instance with input width `n`.
pub fn check_mask_instance(rng: &mut Rng, n: usize, hidden: &[usize]) -> Result<GradCheckReport> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(n);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let mut classifier = Mlp::new(&sizes, rng)?;
    jitter(&mut classifier, rng);
    let log_alpha: Vec<f64> = (0..n).map(|_| rng.uniform() * 4.0 - 2.0).collect();
    let log_beta: Vec<f64> = (0..n)
        .map(|_| libm::log(2.0 / 3.0) + rng.uniform() * 0.6 - 0.3)
        .collect();
    let mut mask = NeuronMask::from_parts(log_alpha, log_beta)?;
    let num_pairs = 1 + rng.below(4);
    let data: Vec<(Vec<f64>, Vec<f64>)> = (0..num_pairs)
        .map(|_| (normals(rng, n, 1.0), normals(rng, n, 1.0)))
        .collect();
    let uniforms: Vec<Vec<f64>> = (0..num_pairs)
        .map(|_| (0..n).map(|_| 0.02 + 0.96 * rng.uniform()).collect())
        .collect();
    let lambda = rng.uniform();
    let pairs: Vec<(&[f64], &[f64])> = data.iter().map(|(p, q)| (p.as_slice(), q.as_slice())).collect();

    let grad = objective_with_uniforms(&classifier, &mask, &pairs, &uniforms, lambda)?;
    let mut report = GradCheckReport::default();

    for k in 0..classifier.params().len() {
        let base = classifier.params()[k];
        let numeric = central(base, |v| {
            classifier.params_mut()[k] = v;
            objective_with_uniforms(&classifier, &mask, &pairs, &uniforms, lambda)
                .map(|g| g.total)
                .unwrap_or(f64::NAN)
        });
        classifier.params_mut()[k] = base;
        report.record(|| format!("classifier[{k}]"), grad.classifier[k], numeric);
    }
    for i in 0..n {
        let base = mask.log_alpha[i];
        let numeric = central(base, |v| {
            mask.log_alpha[i] = v;
            objective_with_uniforms(&classifier, &mask, &pairs, &uniforms, lambda)
                .map(|g| g.total)
                .unwrap_or(f64::NAN)
        });
        mask.log_alpha[i] = base;
        report.record(|| format!("log_alpha[{i}]"), grad.log_alpha[i], numeric);

        let base = mask.log_beta[i];
        let numeric = central(base, |v| {
            mask.log_beta[i] = v;
            objective_with_uniforms(&classifier, &mask, &pairs, &uniforms, lambda)
                .map(|g| g.total)
                .unwrap_or(f64::NAN)
        });
        mask.log_beta[i] = base;
        report.record(|| format!("log_beta[{i}]"), grad.log_beta[i], numeric);
    }
    Ok(report)
}

/// Check parameter and input gradients of the attacker's summed BCE on a
/// random instance.
pub fn check_attack_instance(rng: &mut Rng, n: usize, vocab_size: usize, hidden: &[usize]) -> Result<GradCheckReport> {
    let vocabulary: Vec<String> = (0..vocab_size).map(|i| format!("tok{i}")).collect();
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(n);
    sizes.extend_from_slice(hidden);
    sizes.push(vocab_size);
    let mut network = Mlp::new(&sizes, rng)?;
    jitter(&mut network, rng);
    let mut model = AttackModel::new(vocabulary.clone(), network)?;
    let batch_len = 1 + rng.below(3);
    let mut embeddings: Vec<Vec<f64>> = (0..batch_len).map(|_| normals(rng, n, 1.0)).collect();
    let token_sets: Vec<BTreeSet<String>> = (0..batch_len)
        .map(|_| {
            vocabulary
                .iter()
                .filter(|_| rng.uniform() < 0.5)
                .cloned()
                .collect()
        })
        .collect();

    fn loss(model: &AttackModel, embeddings: &[Vec<f64>], tokens: &[BTreeSet<String>]) -> f64 {
        let batch: Vec<LabeledEmbedding<'_>> = embeddings
            .iter()
            .zip(tokens)
            .map(|(e, t)| LabeledEmbedding { embedding: e, tokens: t })
            .collect();
        attack_loss_gradient(model, &batch).map(|g| g.loss).unwrap_or(f64::NAN)
    }

    let grad = {
        let batch: Vec<LabeledEmbedding<'_>> = embeddings
            .iter()
            .zip(&token_sets)
            .map(|(e, t)| LabeledEmbedding { embedding: e, tokens: t })
            .collect();
        attack_loss_gradient(&model, &batch)?
    };
    let mut report = GradCheckReport::default();

    for k in 0..model.network.params().len() {
        let base = model.network.params()[k];
        let numeric = central(base, |v| {
            model.network.params_mut()[k] = v;
            loss(&model, &embeddings, &token_sets)
        });
        model.network.params_mut()[k] = base;
        report.record(|| format!("params[{k}]"), grad.params[k], numeric);
    }
    for b in 0..batch_len {
        for i in 0..n {
            let base = embeddings[b][i];
            let numeric = central(base, |v| {
                embeddings[b][i] = v;
                loss(&model, &embeddings, &token_sets)
            });
            embeddings[b][i] = base;
            report.record(|| format!("input[{b}][{i}]"), grad.inputs[b][i], numeric);
        }
    }

    // Single-token probability gradient, as consumed by Integrated Gradients.
    let token = rng.below(vocab_size);
    let x = embeddings[0].clone();
    let (_, analytic) = model.token_probability_gradient(&x, token);
    for i in 0..n {
        let mut probe = x.clone();
        let numeric = central(x[i], |v| {
            probe[i] = v;
            model.probabilities(&probe).map(|p| p[token]).unwrap_or(f64::NAN)
        });
        report.record(|| format!("probability[{token}] input[{i}]"), analytic[i], numeric);
    }
    Ok(report)
}

/// Run `instances` random mask checks with `n` in `2..=8`.
pub fn mask_gradient_suite(seed: u64, instances: usize, hidden: &[usize]) -> Result<GradCheckReport> {
    let root = Rng::seed_from(seed);
    let mut total = GradCheckReport::default();
    for k in 0..instances {
        let mut rng = root.split(&format!("mask-{k}"));
        let n = 2 + rng.below(7);
        total.merge(check_mask_instance(&mut rng, n, hidden)?);
    }
    Ok(total)
}

/// Run `instances` random attacker checks with `n` in `2..=8`.
pub fn attack_gradient_suite(seed: u64, instances: usize, hidden: &[usize]) -> Result<GradCheckReport> {
    let root = Rng::seed_from(seed);
    let mut total = GradCheckReport::default();
    for k in 0..instances {
        let mut rng = root.split(&format!("attack-{k}"));
        let n = 2 + rng.below(7);
        let vocab = 1 + rng.below(4);
        total.merge(check_attack_instance(&mut rng, n, vocab, hidden)?);
    }
    Ok(total)
}
