//! Minimal dense ReLU network with hand-written backprop, plus Adam.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out x in`) followed by the bias. Gradients use the same
//! layout, which keeps the optimizer and the checkpoint format trivial.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numkit::Rng;
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against label `y`, with the probability
/// clamp applied. Returns the loss and its derivative with respect to the
/// logit (zero inside the clamped region).
pub fn bce_from_logit(logit: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let clamped = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -(y * libm::log(clamped) + (1.0 - y) * libm::log(1.0 - clamped));
    let grad = if p == clamped { p - y } else { 0.0 };
    (loss, grad)
}

/// Feedforward network: ReLU hidden layers, linear output (logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_trace`]; `acts[0]` is the input and
/// the last entry is the logit vector.
#[derive(Debug, Clone)]
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("trace always holds the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// He-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`), zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = libm::sqrt(6.0 / fan_in as f64);
            for _ in 0..fan_in * fan_out {
                params.push((2.0 * rng.uniform() - 1.0) * bound);
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(&sizes)?;
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::dim("network parameters", expected, params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("network parameters must be finite"));
        }
        Ok(Mlp { sizes, params })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::param(format!(
                "layer sizes must be at least two positive widths, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Weight matrix and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offset(l);
        let w = &self.params[start..start + fan_in * fan_out];
        let b = &self.params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
        (w, b)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..self.num_layers() {
            h = self.apply_layer(l, &h);
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let next = self.apply_layer(l, &acts[l]);
            acts.push(next);
        }
        Trace { acts }
    }

    fn apply_layer(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let fan_in = self.sizes[l];
        let last = l + 1 == self.num_layers();
        b.iter()
            .enumerate()
            .map(|(o, bias)| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + bias;
                if last {
                    z
                } else {
                    z.max(0.0)
                }
            })
            .collect()
    }

    /// Backpropagate `d_logits` through a recorded trace, accumulating
    /// parameter gradients into `grad` and returning the input gradient.
    pub fn backward(&self, trace: &Trace, d_logits: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut delta = d_logits.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offset(l);
            let input = &trace.acts[l];
            let (w, _) = self.layer(l);
            {
                let (gw, gb) = grad[start..start + fan_in * fan_out + fan_out]
                    .split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, x) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, a) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * a;
                }
            }
            if l > 0 {
                // ReLU gate of the layer that produced `input`.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    pub fn param_norm(&self) -> f64 {
        crate::numkit::euclidean_norm(&self.params)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}
