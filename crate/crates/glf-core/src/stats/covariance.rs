//! Shrinkage-regularized covariance estimation.

use nalgebra::DMatrix;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Symmetric positive-definite covariance with cached inverse and
/// log-determinant. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    sigma: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log_det: f64,
    shrinkage: f64,
    /// Set when the batch had zero spread and the identity fallback was used.
    degenerate: bool,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `d^T Σ^{-1} d` for a difference vector `d`.
    pub fn quadratic_form(&self, d: &[f64]) -> Result<f64> {
        let k = self.dim();
        if d.len() != k {
            return Err(Error::Dimension(format!(
                "quadratic_form: vector of length {} against {}x{} covariance",
                d.len(),
                k,
                k
            )));
        }
        let mut total = 0.0;
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..k {
                s += self.inverse[(i, j)] * d[j];
            }
            total += d[i] * s;
        }
        Ok(total)
    }

    /// Σ^{-1} as a constant tensor for tape computations.
    pub fn inverse_tensor(&self) -> Tensor {
        let k = self.dim();
        let mut data = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                data.push(self.inverse[(i, j)]);
            }
        }
        Tensor::matrix(data, k, k).expect("cached inverse is finite")
    }

    fn from_spd(sigma: DMatrix<f64>, shrinkage: f64, degenerate: bool) -> Result<Self> {
        let chol = sigma.clone().cholesky().ok_or_else(|| {
            Error::Degenerate("covariance is not positive-definite after shrinkage".into())
        })?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inverse = chol.inverse();
        Ok(CovarianceEstimate {
            sigma,
            inverse,
            log_det,
            shrinkage,
            degenerate,
        })
    }
}

/// Estimates `Σ̂ = S_emp + λ·(trace(S_emp)/k)·I` from an `m×k` batch, where
/// `S_emp` is the unbiased sample covariance. A zero-spread batch falls back
/// to `λ·I` with the degenerate flag set. The estimate is always
/// tape-detached: only the values of `batch` are read.
pub fn estimate_covariance(batch: &Tensor, lambda: f64) -> Result<CovarianceEstimate> {
    let shape = batch.shape();
    if shape.len() != 2 {
        return Err(Error::InvalidShape {
            op: "estimate_covariance",
            shape: shape.to_vec(),
            reason: "expected an m x k batch",
        });
    }
    let (m, k) = (shape[0], shape[1]);
    if m < 2 {
        return Err(Error::Degenerate(
            "estimate_covariance requires at least 2 rows".into(),
        ));
    }
    if lambda <= 0.0 {
        return Err(Error::Domain {
            op: "estimate_covariance",
            reason: "shrinkage must be positive".into(),
        });
    }
    let data = batch.data();
    let mut mean = vec![0.0; k];
    for i in 0..m {
        for j in 0..k {
            mean[j] += data[i * k + j];
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut s = DMatrix::<f64>::zeros(k, k);
    for i in 0..m {
        let row = &data[i * k..(i + 1) * k];
        for a in 0..k {
            let da = row[a] - mean[a];
            for b in a..k {
                s[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (m - 1) as f64;
    for a in 0..k {
        for b in a..k {
            let v = s[(a, b)] / denom;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    let trace = s.trace();
    if trace <= 0.0 {
        // Zero-spread batch: identity fallback at unit trace scale.
        let sigma = DMatrix::<f64>::identity(k, k) * lambda;
        return CovarianceEstimate::from_spd(sigma, lambda, true);
    }
    let ridge = lambda * trace / k as f64;
    for a in 0..k {
        s[(a, a)] += ridge;
    }
    CovarianceEstimate::from_spd(s, lambda, false)
}

/// Heavy-tail rescaling `Σ' = ρΣ/(ρ-2)`; inverse and log-determinant are
/// rescaled consistently. Requires `ρ > 2`.
pub fn scale_covariance(cov: &CovarianceEstimate, rho: f64) -> Result<CovarianceEstimate> {
    if rho <= 2.0 {
        return Err(Error::Domain {
            op: "scale_covariance",
            reason: format!("degrees of freedom must exceed 2, got {rho}"),
        });
    }
    let factor = rho / (rho - 2.0);
    let k = cov.dim() as f64;
    Ok(CovarianceEstimate {
        sigma: &cov.sigma * factor,
        inverse: &cov.inverse / factor,
        log_det: cov.log_det + k * factor.ln(),
        shrinkage: cov.shrinkage,
        degenerate: cov.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cross_batch() -> Tensor {
        Tensor::matrix(vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0], 4, 2).unwrap()
    }

    #[test]
    fn hand_computed_cross_configuration() {
        // S_emp = diag(2/3, 2/3); ridge = λ·trace/k = 0.01·(4/3)/2.
        let cov = estimate_covariance(&cross_batch(), 0.01).unwrap();
        let expect = 2.0 / 3.0 + 0.01 * (4.0 / 3.0) / 2.0;
        assert!((cov.sigma()[(0, 0)] - expect).abs() < 1e-12);
        assert!((cov.sigma()[(1, 1)] - expect).abs() < 1e-12);
        assert!(cov.sigma()[(0, 1)].abs() < 1e-12);
        assert!(!cov.is_degenerate());
    }

    #[test]
    fn identical_rows_fall_back_to_identity() {
        let batch = Tensor::matrix(vec![2.0, -1.0, 2.0, -1.0, 2.0, -1.0], 3, 2).unwrap();
        let cov = estimate_covariance(&batch, 0.05).unwrap();
        assert!(cov.is_degenerate());
        assert!((cov.sigma()[(0, 0)] - 0.05).abs() < 1e-15);
        assert!((cov.sigma()[(1, 1)] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn eigenvalue_floor_holds() {
        let mut rng = crate::rng::rng_from(&[41]);
        let (m, k) = (50, 8);
        let data: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let batch = Tensor::matrix(data, m, k).unwrap();
        let lambda = 1e-3;
        let cov = estimate_covariance(&batch, lambda).unwrap();
        // Reconstruct S_emp trace: trace(Σ̂) = trace(S) + k·λ·trace(S)/k.
        let trace_s = cov.sigma().trace() / (1.0 + lambda);
        let eig = nalgebra::SymmetricEigen::new(cov.sigma().clone());
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_eig >= lambda * trace_s / k as f64 - 1e-12);
    }

    #[test]
    fn inverse_times_sigma_is_identity() {
        let mut rng = crate::rng::rng_from(&[42]);
        let data: Vec<f64> = (0..120).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let batch = Tensor::matrix(data, 20, 6).unwrap();
        let cov = estimate_covariance(&batch, 1e-3).unwrap();
        let prod = cov.inverse() * cov.sigma();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn scaling_matches_determinant_identity() {
        let cov = estimate_covariance(&cross_batch(), 0.01).unwrap();
        let rho = 4.0;
        let scaled = scale_covariance(&cov, rho).unwrap();
        let k = cov.dim() as f64;
        assert!(
            (scaled.log_det() - (cov.log_det() + k * (rho / (rho - 2.0)).ln())).abs() < 1e-12
        );
        // ρ=4 doubles Σ.
        assert!((scaled.sigma()[(0, 0)] - 2.0 * cov.sigma()[(0, 0)]).abs() < 1e-12);
        // ρ → ∞ recovers Σ.
        let wide = scale_covariance(&cov, 1e6).unwrap();
        assert!((wide.sigma()[(0, 0)] / cov.sigma()[(0, 0)] - 1.0).abs() < 1e-5);
        assert!(scale_covariance(&cov, 2.0).is_err());
    }
}
