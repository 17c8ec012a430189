//! Generalized Laplace and Mahalanobis noise mechanisms.
//!
//! Both draw `Z = Y * Sigma^(1/2) * X` with `X` uniform on the unit sphere
//! and `Y ~ Gamma(n, 1/eps)`; the isotropic mechanism is the `Sigma = I`
//! case. The resulting density is proportional to `exp(-eps * ||z||_M)`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingRecord;
use crate::numkit::{
    euclidean_norm, mahalanobis_norm, sample_gamma, sample_standard_normal, DiagonalPD, Rng,
};
use crate::stats::{gamma_cdf, ks_statistic};
use crate::{Error, Result};

/// Tolerance on `trace(Sigma) = n` for the Mahalanobis mechanism.
pub const TRACE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    IsotropicLaplace,
    Mahalanobis,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::IsotropicLaplace => "isotropic_laplace",
            MechanismKind::Mahalanobis => "mahalanobis",
        }
    }
}

/// Privacy budget, mechanism kind, sensitivity matrix and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub epsilon: f64,
    pub kind: MechanismKind,
    pub sigma: DiagonalPD,
    pub seed: u64,
}

impl MechanismConfig {
    pub fn isotropic(epsilon: f64, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        let cfg = MechanismConfig {
            epsilon,
            kind: MechanismKind::IsotropicLaplace,
            sigma: DiagonalPD::identity(n),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mahalanobis(epsilon: f64, sigma: DiagonalPD, seed: u64) -> Result<Self> {
        let cfg = MechanismConfig {
            epsilon,
            kind: MechanismKind::Mahalanobis,
            sigma,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.epsilon.is_nan() {
            return Err(Error::param(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        match self.kind {
            MechanismKind::IsotropicLaplace if !self.sigma.is_identity() => Err(Error::param(
                "isotropic mechanism requires the identity matrix",
            )),
            MechanismKind::Mahalanobis => {
                let n = self.sigma.dim() as f64;
                let tr = self.sigma.trace();
                if (tr - n).abs() > TRACE_TOLERANCE * n.max(1.0) {
                    Err(Error::param(format!("trace(Sigma) = {tr}, expected {n}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// The metric the guarantee is stated in: Mahalanobis, or Euclidean for
    /// the isotropic kind.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::dim("distance", a.len(), b.len()));
        }
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&d)
    }

    fn norm(&self, z: &[f64]) -> Result<f64> {
        match self.kind {
            MechanismKind::IsotropicLaplace => {
                if z.len() != self.dim() {
                    return Err(Error::dim("noise norm", self.dim(), z.len()));
                }
                Ok(euclidean_norm(z))
            }
            MechanismKind::Mahalanobis => mahalanobis_norm(z, &self.sigma),
        }
    }
}

/// One noise vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub z: Vec<f64>,
}

/// Draw one noise vector of dimension `n`.
pub fn sample_noise(rng: &mut Rng, cfg: &MechanismConfig, n: usize) -> Result<NoiseSample> {
    if n != cfg.dim() {
        return Err(Error::dim("sample_noise", cfg.dim(), n));
    }
    cfg.validate()?;
    let normal = sample_standard_normal(rng, n);
    let len = euclidean_norm(&normal);
    let radius = sample_gamma(rng, n as f64, 1.0 / cfg.epsilon)?;
    let scale = radius / len;
    let z = match cfg.kind {
        MechanismKind::IsotropicLaplace => normal.iter().map(|x| scale * x).collect(),
        MechanismKind::Mahalanobis => normal
            .iter()
            .zip(cfg.sigma.diag())
            .map(|(x, s)| scale * libm::sqrt(*s) * x)
            .collect(),
    };
    Ok(NoiseSample { z })
}

/// `embedding + Z`; the input is left untouched.
pub fn perturb(embedding: &[f64], cfg: &MechanismConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    if embedding.len() != cfg.dim() {
        return Err(Error::dim("perturb", cfg.dim(), embedding.len()));
    }
    let noise = sample_noise(rng, cfg, embedding.len())?;
    Ok(embedding.iter().zip(&noise.z).map(|(x, z)| x + z).collect())
}

/// Perturb a record with the child stream `Rng(cfg.seed).split(record.id)`,
/// so the result does not depend on processing order.
pub fn perturb_record(record: &EmbeddingRecord, cfg: &MechanismConfig) -> Result<EmbeddingRecord> {
    let mut rng = Rng::seed_from(cfg.seed).split(&record.id);
    let embedding = perturb(&record.embedding, cfg, &mut rng)?;
    Ok(EmbeddingRecord {
        embedding,
        ..record.clone()
    })
}

/// `-eps * ||z||` in the mechanism's metric (the normalizer is omitted).
pub fn log_density_unnormalized(z: &[f64], cfg: &MechanismConfig) -> Result<f64> {
    Ok(-cfg.epsilon * cfg.norm(z)?)
}

/// `||Sigma^(-1/2) z||_2`, which follows Gamma(n, 1/eps) for mechanism noise.
pub fn whitened_radius(z: &[f64], sigma: &DiagonalPD) -> Result<f64> {
    mahalanobis_norm(z, sigma)
}

/// Result of checking the metric-LDP density ratio at a set of probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    /// `eps * ||x - x'||` in the mechanism's metric.
    pub bound: f64,
    /// Largest observed `log f(y - x) - log f(y - x')`.
    pub max_gap: f64,
    pub violations: usize,
    pub probes: usize,
    pub passed: bool,
}

/// Slack allowed on the log-ratio bound.
pub const LDP_SLACK: f64 = 1e-9;

/// Check `log f(y - x) - log f(y - x') <= eps * d(x, x')` at every probe `y`.
pub fn verify_ldp_ratio<P: AsRef<[f64]>>(
    cfg: &MechanismConfig,
    x: &[f64],
    x_prime: &[f64],
    probes: &[P],
) -> Result<LdpReport> {
    let n = cfg.dim();
    if x.len() != n || x_prime.len() != n {
        return Err(Error::dim(
            "verify_ldp_ratio",
            n,
            if x.len() != n { x.len() } else { x_prime.len() },
        ));
    }
    let bound = cfg.epsilon * cfg.distance(x, x_prime)?;
    let mut max_gap = f64::NEG_INFINITY;
    let mut violations = 0;
    for y in probes {
        let y = y.as_ref();
        if y.len() != n {
            return Err(Error::dim("ldp probe", n, y.len()));
        }
        let zx: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let zp: Vec<f64> = y.iter().zip(x_prime).map(|(a, b)| a - b).collect();
        let gap = log_density_unnormalized(&zx, cfg)? - log_density_unnormalized(&zp, cfg)?;
        if gap > bound + LDP_SLACK {
            violations += 1;
        }
        max_gap = max_gap.max(gap);
    }
    if probes.is_empty() {
        max_gap = 0.0;
    }
    Ok(LdpReport {
        bound,
        max_gap,
        violations,
        probes: probes.len(),
        passed: violations == 0,
    })
}

/// Empirical check of the radial law of the noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialLawReport {
    pub samples: usize,
    /// KS distance of whitened radii against Gamma(n, 1/eps).
    pub ks_statistic: f64,
    pub mean_radius: f64,
    /// `n / eps`.
    pub expected_mean: f64,
    /// Per-coordinate mean of the whitened unit direction.
    pub direction_mean: Vec<f64>,
}

pub fn verify_radial_law(cfg: &MechanismConfig, samples: usize, rng: &mut Rng) -> Result<RadialLawReport> {
    if samples == 0 {
        return Err(Error::Empty("radial-law samples"));
    }
    let n = cfg.dim();
    let inv_sqrt: Vec<f64> = cfg.sigma.diag().iter().map(|s| 1.0 / libm::sqrt(*s)).collect();
    let mut radii = Vec::with_capacity(samples);
    let mut direction_mean = alloc::vec![0.0; n];
    for _ in 0..samples {
        let z = sample_noise(rng, cfg, n)?.z;
        let w: Vec<f64> = z.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect();
        let r = euclidean_norm(&w);
        if r > 0.0 {
            for (m, wi) in direction_mean.iter_mut().zip(&w) {
                *m += wi / r;
            }
        }
        radii.push(r);
    }
    let s = samples as f64;
    direction_mean.iter_mut().for_each(|m| *m /= s);
    let shape = n as f64;
    let scale = 1.0 / cfg.epsilon;
    Ok(RadialLawReport {
        samples,
        ks_statistic: ks_statistic(&radii, |x| gamma_cdf(shape, scale, x)),
        mean_radius: radii.iter().sum::<f64>() / s,
        expected_mean: shape * scale,
        direction_mean,
    })
}
