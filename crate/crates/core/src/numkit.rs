//! Seeded sampling and the diagonal linear algebra used everywhere else.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Seedable pseudo-random stream.
///
/// Child streams obtained with [`Rng::split`] depend only on the seed of the
/// parent and the label, never on how much of the parent stream has been
/// consumed. This is what lets per-record noise be drawn in any order (or in
/// parallel) and still be reproducible.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `label`.
    pub fn split(&self, label: &str) -> Rng {
        Rng::seed_from(mix_label(self.seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "empty range");
        let bound = bound as u64;
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let wide = (self.next_u64() as u128) * (bound as u128);
            if (wide as u64) >= threshold {
                return (wide >> 64) as usize;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix_label(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then fold in the parent seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed) ^ h)
}

/// One standard normal variate (Box-Muller, cosine branch).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    let u1 = rng.uniform_open();
    let u2 = rng.uniform();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// `n` i.i.d. standard normals. Box-Muller pairs are used in full; the spare
/// value of an odd tail is discarded.
pub fn sample_standard_normal(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1 = rng.uniform_open();
        let u2 = rng.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(core::f64::consts::TAU * u2);
        out.push(r * c);
        out.push(r * s);
    }
    out.truncate(n);
    out
}

/// Gamma(shape, scale) variate, Marsaglia-Tsang squeeze. Shapes below one use
/// the `Gamma(shape + 1) * U^(1/shape)` boost.
pub fn sample_gamma(rng: &mut Rng, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::param(format!("gamma shape must be > 0, got {shape}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param(format!("gamma scale must be > 0, got {scale}")));
    }
    if shape < 1.0 {
        let boosted = marsaglia_tsang(rng, shape + 1.0);
        let u = rng.uniform_open();
        return Ok(scale * boosted * libm::pow(u, 1.0 / shape));
    }
    Ok(scale * marsaglia_tsang(rng, shape))
}

fn marsaglia_tsang(rng: &mut Rng, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let (x, v) = loop {
            let x = standard_normal(rng);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = rng.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if libm::log(u) < 0.5 * x2 + d * (1.0 - v + libm::log(v)) {
            return d * v;
        }
    }
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Diagonal positive-definite matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiagonalRepr", into = "DiagonalRepr")]
pub struct DiagonalPD {
    diag: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DiagonalRepr {
    diag: Vec<f64>,
}

impl TryFrom<DiagonalRepr> for DiagonalPD {
    type Error = Error;

    fn try_from(r: DiagonalRepr) -> Result<Self> {
        DiagonalPD::new(r.diag)
    }
}

impl From<DiagonalPD> for DiagonalRepr {
    fn from(d: DiagonalPD) -> Self {
        DiagonalRepr { diag: d.diag }
    }
}

impl DiagonalPD {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Empty("diagonal matrix"));
        }
        if let Some((i, v)) = diag
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::param(format!(
                "diagonal entry {i} must be finite and > 0, got {v}"
            )));
        }
        Ok(DiagonalPD { diag })
    }

    pub fn identity(n: usize) -> Self {
        DiagonalPD {
            diag: alloc::vec![1.0; n],
        }
    }

    /// Trace-normalized matrix from a nonnegative sensitivity profile.
    ///
    /// The profile is rescaled to sum to `n` (an all-zero profile becomes all
    /// ones), `delta` is added to every entry, and the result is rescaled
    /// once more so the trace is exactly `n`.
    pub fn from_profile(profile: &[f64], delta: f64) -> Result<Self> {
        let n = profile.len();
        if n == 0 {
            return Err(Error::Empty("sensitivity profile"));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::param(format!("delta must be >= 0, got {delta}")));
        }
        if let Some((i, v)) = profile
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::param(format!(
                "profile entry {i} must be finite and >= 0, got {v}"
            )));
        }
        let nf = n as f64;
        let total: f64 = profile.iter().sum();
        let mut diag: Vec<f64> = if total > 0.0 {
            profile.iter().map(|p| p * nf / total + delta).collect()
        } else {
            alloc::vec![1.0 + delta; n]
        };
        let trace: f64 = diag.iter().sum();
        let rescale = nf / trace;
        for d in &mut diag {
            *d *= rescale;
        }
        DiagonalPD::new(diag)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sqrt_diag(&self) -> DiagonalPD {
        DiagonalPD {
            diag: self.diag.iter().map(|d| libm::sqrt(*d)).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|d| *d == 1.0)
    }
}

/// Free-function form of [`DiagonalPD::sqrt_diag`].
pub fn sqrt_diag(sigma: &DiagonalPD) -> DiagonalPD {
    sigma.sqrt_diag()
}

/// `sqrt(v^T Sigma^-1 v)` for diagonal `Sigma`.
pub fn mahalanobis_norm(v: &[f64], sigma: &DiagonalPD) -> Result<f64> {
    if v.len() != sigma.dim() {
        return Err(Error::dim("mahalanobis_norm", sigma.dim(), v.len()));
    }
    Ok(libm::sqrt(
        v.iter().zip(&sigma.diag).map(|(x, s)| x * x / s).sum(),
    ))
}
