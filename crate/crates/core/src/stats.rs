//! Goodness-of-fit and rank tests plus the distribution functions they need.

use alloc::vec;
use alloc::vec::Vec;

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        // Series expansion.
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum * libm::exp(log_prefix)).min(1.0)
    } else {
        // Continued fraction for Q(a, x), modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - libm::exp(log_prefix) * h).max(0.0)
    }
}

/// CDF of Gamma(shape, scale).
pub fn gamma_cdf(shape: f64, scale: f64, x: f64) -> f64 {
    regularized_gamma_p(shape, x / scale)
}

/// Outcome of a Wilcoxon signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignedRankTest {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Number of nonzero differences that entered the test.
    pub n_used: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Largest sample size for which the exact null distribution is enumerated.
pub const EXACT_SIGNED_RANK_LIMIT: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped and tied magnitudes get average ranks. The
/// null distribution is exact up to [`EXACT_SIGNED_RANK_LIMIT`] nonzero
/// differences; above that a normal approximation with tie and continuity
/// correction is used. With no nonzero differences the p-value is 1.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> SignedRankTest {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return SignedRankTest {
            w_plus: 0.0,
            n_used: 0,
            p_value: 1.0,
            exact: true,
        };
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // Doubled average ranks stay integral.
    let mut doubled = vec![0usize; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let r2 = (i + 1) + (j + 1);
        for slot in &mut doubled[i..=j] {
            *slot = r2;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    let w2: usize = nz
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let w_plus = w2 as f64 / 2.0;

    if n <= EXACT_SIGNED_RANK_LIMIT {
        let max = doubled.iter().sum::<usize>();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        let mut reach = 0;
        for r in &doubled {
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let total: f64 = counts.iter().sum();
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / total;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / total;
        SignedRankTest {
            w_plus,
            n_used: n,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            exact: true,
        }
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_adj: f64 = tie_sizes
            .iter()
            .map(|t| {
                let t = *t as f64;
                t * t * t - t
            })
            .sum::<f64>()
            / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
        let dev = w_plus - mean;
        let corrected = (dev.abs() - 0.5).max(0.0);
        let z = corrected / libm::sqrt(var);
        SignedRankTest {
            w_plus,
            n_used: n,
            p_value: (2.0 * (1.0 - normal_cdf(z))).min(1.0),
            exact: false,
        }
    }
}
