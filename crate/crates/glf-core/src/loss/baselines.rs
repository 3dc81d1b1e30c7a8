//! The five constraint baselines of the toy comparison study:
//! (a) hyperspherical uniformity, (b) hypercube quantile matching,
//! (c) Gaussian NLL with batch moments, (d) same with identity covariance,
//! (e) DBSCAN Gaussian-mixture NLL.
//!
//! Each baseline splits into `prepare` (the stop-gradient side: sort ranks,
//! batch moments, cluster assignments — computed from plain values) and
//! `loss` (the differentiable penalty against those frozen quantities).

use std::f64::consts::PI;

use super::align::uniformity_sphere;
use crate::autodiff::Tensor;
use crate::cluster::{cluster_moments, dbscan};
use crate::error::{Error, Result};
use crate::stats::estimate_covariance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// (a) uniform hyperspherical distribution.
    UniformSphere,
    /// (b) uniform hypercube distribution via 1-D quantile matching.
    UniformCube,
    /// (c) Gaussian with batch-wise empirical mean and covariance.
    GaussFull,
    /// (d) Gaussian with batch-wise empirical mean and identity covariance.
    GaussIdentity,
    /// (e) DBSCAN mixture of isotropic Gaussians.
    GaussMixture,
}

impl BaselineKind {
    pub fn letter(&self) -> char {
        match self {
            BaselineKind::UniformSphere => 'a',
            BaselineKind::UniformCube => 'b',
            BaselineKind::GaussFull => 'c',
            BaselineKind::GaussIdentity => 'd',
            BaselineKind::GaussMixture => 'e',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    /// Gaussian-kernel bandwidth for (a).
    pub kernel_t: f64,
    /// Covariance shrinkage for (c).
    pub shrink: f64,
    /// DBSCAN radius and core threshold for (e).
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            kernel_t: 2.0,
            shrink: 1e-3,
            dbscan_eps: 0.5,
            dbscan_min_pts: 4,
        }
    }
}

/// Frozen (stop-gradient) side of one baseline evaluation.
pub enum BaselineAux {
    None,
    /// (b): equispaced Uniform(-1,1) quantiles scattered to the batch rank
    /// positions, per dimension.
    Quantile { targets: Tensor },
    /// (c): negated batch mean, inverse covariance, and the log-normalizer.
    Gauss {
        neg_mean: Tensor,
        inverse: Tensor,
        const_term: f64,
    },
    /// (d): negated batch mean and the isotropic log-normalizer.
    GaussId { neg_mean: Tensor, const_term: f64 },
    /// (e): per-row assigned cluster mean / inverse variance / log term,
    /// zeros for noise rows.
    Mixture {
        means: Tensor,
        inv_var: Tensor,
        log_terms: Tensor,
        assigned: usize,
        all_noise: bool,
    },
}

impl BaselineAux {
    pub fn all_noise(&self) -> bool {
        matches!(self, BaselineAux::Mixture { all_noise: true, .. })
    }
}

/// Computes the frozen side from the batch values.
pub fn prepare_baseline(
    kind: BaselineKind,
    z_values: &Tensor,
    params: &BaselineParams,
) -> Result<BaselineAux> {
    let shape = z_values.shape();
    if shape.len() != 2 || shape[0] < 2 {
        return Err(Error::InvalidShape {
            op: "prepare_baseline",
            shape: shape.to_vec(),
            reason: "need an m x d batch with m >= 2",
        });
    }
    let (m, d) = (shape[0], shape[1]);
    let data = z_values.data();
    match kind {
        BaselineKind::UniformSphere => Ok(BaselineAux::None),
        BaselineKind::UniformCube => {
            // Per dimension: sort the batch coordinates and scatter midpoint
            // quantiles of Uniform(-1,1) back to the original rows.
            let mut targets = vec![0.0; m * d];
            for col in 0..d {
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by(|&a, &b| {
                    data[a * d + col]
                        .partial_cmp(&data[b * d + col])
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                for (rank, &row) in order.iter().enumerate() {
                    targets[row * d + col] = -1.0 + (2.0 * rank as f64 + 1.0) / m as f64;
                }
            }
            Ok(BaselineAux::Quantile {
                targets: Tensor::matrix(targets, m, d)?,
            })
        }
        BaselineKind::GaussFull => {
            let cov = estimate_covariance(z_values, params.shrink)?;
            let neg_mean = column_means(data, m, d).iter().map(|v| -v).collect();
            let const_term = 0.5 * (d as f64 * (2.0 * PI).ln() + cov.log_det());
            Ok(BaselineAux::Gauss {
                neg_mean: Tensor::new(neg_mean, vec![d])?,
                inverse: cov.inverse_tensor(),
                const_term,
            })
        }
        BaselineKind::GaussIdentity => {
            let neg_mean = column_means(data, m, d).iter().map(|v| -v).collect();
            Ok(BaselineAux::GaussId {
                neg_mean: Tensor::new(neg_mean, vec![d])?,
                const_term: 0.5 * d as f64 * (2.0 * PI).ln(),
            })
        }
        BaselineKind::GaussMixture => {
            let assignment = dbscan(z_values, params.dbscan_eps, params.dbscan_min_pts)?;
            let moments = cluster_moments(z_values, &assignment)?;
            let mut means = vec![0.0; m * d];
            let mut inv_var = vec![0.0; m];
            let mut log_terms = vec![0.0; m];
            let mut assigned = 0usize;
            for (i, &label) in assignment.labels.iter().enumerate() {
                if label < 0 {
                    continue;
                }
                let mom = moments
                    .iter()
                    .find(|mo| mo.cluster == label as usize)
                    .expect("moments exist for every non-noise cluster");
                means[i * d..(i + 1) * d].copy_from_slice(&mom.mean);
                inv_var[i] = 1.0 / mom.variance;
                log_terms[i] = 0.5 * d as f64 * (2.0 * PI * mom.variance).ln();
                assigned += 1;
            }
            Ok(BaselineAux::Mixture {
                means: Tensor::matrix(means, m, d)?,
                inv_var: Tensor::new(inv_var, vec![m])?,
                log_terms: Tensor::new(log_terms, vec![m])?,
                assigned,
                all_noise: assigned == 0,
            })
        }
    }
}

/// Differentiable penalty against the frozen auxiliary.
pub fn baseline_loss(
    kind: BaselineKind,
    z: &Tensor,
    aux: &BaselineAux,
    params: &BaselineParams,
) -> Result<Tensor> {
    match (kind, aux) {
        (BaselineKind::UniformSphere, BaselineAux::None) => {
            uniformity_sphere(&z.normalize_rows()?, params.kernel_t)
        }
        (BaselineKind::UniformCube, BaselineAux::Quantile { targets }) => {
            z.sub(targets)?.powf(2.0)?.mean()
        }
        (
            BaselineKind::GaussFull,
            BaselineAux::Gauss {
                neg_mean,
                inverse,
                const_term,
            },
        ) => {
            let centered = z.add_rowvec(neg_mean)?;
            let quad = centered.matmul(inverse)?.mul(&centered)?.row_sum()?;
            quad.mul_scalar(0.5)?.mean()?.add_scalar(*const_term)
        }
        (BaselineKind::GaussIdentity, BaselineAux::GaussId { neg_mean, const_term }) => {
            let centered = z.add_rowvec(neg_mean)?;
            let quad = centered.mul(&centered)?.row_sum()?;
            quad.mul_scalar(0.5)?.mean()?.add_scalar(*const_term)
        }
        (
            BaselineKind::GaussMixture,
            BaselineAux::Mixture {
                means,
                inv_var,
                log_terms,
                assigned,
                all_noise,
            },
        ) => {
            if *all_noise {
                return Tensor::scalar_value(0.0);
            }
            let diff = z.sub(means)?;
            let sq = diff.mul(&diff)?.row_sum()?;
            let nll = sq.mul(inv_var)?.mul_scalar(0.5)?.add(log_terms)?;
            nll.sum()?.mul_scalar(1.0 / *assigned as f64)
        }
        _ => Err(Error::Domain {
            op: "baseline_loss",
            reason: "auxiliary does not match the baseline kind".into(),
        }),
    }
}

/// Prepares the frozen side from the current values of `z` and evaluates the
/// penalty in one call.
pub fn constraint_baseline(
    kind: BaselineKind,
    z: &Tensor,
    params: &BaselineParams,
) -> Result<(Tensor, BaselineAux)> {
    let aux = prepare_baseline(kind, &z.detach(), params)?;
    let loss = baseline_loss(kind, z, &aux, params)?;
    Ok((loss, aux))
}

fn column_means(data: &[f64], m: usize, d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for j in 0..d {
            mean[j] += data[i * d + j];
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    mean
}
