//! Closed-form statistical kernels.
//!
//! Everything here is a pure function computed in log-space; probabilities
//! only materialize inside [`discretize_over_batch`] via max-shifted
//! exponentiation.

mod covariance;
mod densities;
mod dirichlet;
mod gamma;

pub use covariance::{estimate_covariance, scale_covariance, CovarianceEstimate};
pub use densities::{gaussian_logpdf, student_t_logpdf, TForm};
pub use dirichlet::{
    dirichlet_expectation, dirichlet_logpdf, dirichlet_logpdf_counted, ln_multivariate_beta,
    EPS_SIMPLEX,
};
pub use gamma::ln_gamma;

use crate::error::{Error, Result};

/// Where a batch distribution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionSource {
    /// Anchor-centered Gaussian values (the fixed calibration target).
    Calibration,
    /// Anchor-centered Student-t values on the live embeddings.
    Data,
    /// Anchor-centered Student-t values on frozen prior representations.
    Prior,
}

/// Normalized probability vector over the non-anchor members of a mini-batch.
#[derive(Debug, Clone)]
pub struct BatchDistribution {
    pub anchor_index: usize,
    pub probs: Vec<f64>,
    pub source: DistributionSource,
}

impl BatchDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Softmax-normalizes log-density values over the non-anchor batch members:
/// `probs_j = exp(l_j - log_sum_exp(l))`.
pub fn discretize_over_batch(
    log_densities: &[f64],
    anchor_index: usize,
    source: DistributionSource,
) -> Result<BatchDistribution> {
    if log_densities.is_empty() {
        return Err(Error::Degenerate(
            "discretize_over_batch on an empty member set".into(),
        ));
    }
    if log_densities.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "discretize_over_batch",
        });
    }
    let max = log_densities
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_densities.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let probs = shifted.into_iter().map(|v| v / total).collect();
    Ok(BatchDistribution {
        anchor_index,
        probs,
        source,
    })
}

/// Shannon entropy in nats with the `0 · log 0 := 0` convention.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain {
            op: "shannon_entropy",
            reason: "negative probability entry".into(),
        });
    }
    Ok(p.iter()
        .map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 })
        .sum())
}
