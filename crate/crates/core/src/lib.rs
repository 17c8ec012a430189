//! Concept-specific privacy protection for text embeddings.
//!
//! The crate learns which embedding dimensions carry a sensitive concept
//! (a hard-concrete neuron mask trained on paired data), turns that into a
//! diagonal sensitivity matrix, and perturbs embeddings with elliptical
//! Laplace-type noise whose density is `exp(-eps * ||z||_M)`. Attack and
//! metric tooling is included so the privacy/utility tradeoff can be measured.
//!
//! Everything here is `no_std` (with `alloc`). File formats, the CLI and
//! parallel drivers live in the companion `sparse` crate.
//!
//! Module map:
//! - [`numkit`]: seeded RNG, Gaussian/Gamma variates, [`numkit::DiagonalPD`] and the Mahalanobis norm.
//! - [`dataset`]: records, concept specs, paired datasets and the synthetic generator.
//! - [`nn`]: the small feedforward network and Adam used by both learners.
//! - [`mask`]: hard-concrete gates and neuron mask training.
//! - [`mechanism`]: isotropic and Mahalanobis noise, densities and LDP checks.
//! - [`attack`]: multi-label token classifier and Integrated Gradients.
//! - [`metrics`]: leakage, confidence, neuron sensitivity, utility, tradeoff rate.
//! - [`gradcheck`]: finite-difference checks for the mask and attacker gradients.
//! - [`stats`]: KS, Wilcoxon signed-rank and the CDFs they need.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod dataset;
mod error;
pub mod gradcheck;
pub mod mask;
pub mod mechanism;
pub mod metrics;
pub mod nn;
pub mod numkit;
pub mod stats;

pub use error::{Error, Result};
