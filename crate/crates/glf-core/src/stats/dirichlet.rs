//! Dirichlet log-density and expectation.

use super::gamma::ln_gamma;
use crate::error::{Error, Result};

/// Interior guard: simplex points closer than this to the boundary are
/// clamped and renormalized before evaluation (the log-density diverges at
/// the boundary).
pub const EPS_SIMPLEX: f64 = 1e-8;

/// `log B(α) = Σ ln Γ(α_j) - ln Γ(Σ α_j)`, the multivariate beta function.
pub fn ln_multivariate_beta(alpha: &[f64]) -> Result<f64> {
    if alpha.is_empty() || alpha.iter().any(|&a| a <= 0.0) {
        return Err(Error::Domain {
            op: "ln_multivariate_beta",
            reason: "alpha entries must be positive".into(),
        });
    }
    let sum: f64 = alpha.iter().sum();
    Ok(alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(sum))
}

/// Dirichlet log-density `Σ (α_j - 1) log β_j - log B(α)` at an interior
/// simplex point. Off-simplex inputs beyond the clamping tolerance are
/// rejected; inputs touching the boundary are clamped to `EPS_SIMPLEX` and
/// renormalized. Returns the log-density together with the number of clamped
/// coordinates.
pub fn dirichlet_logpdf(beta: &[f64], alpha: &[f64]) -> Result<f64> {
    let (lp, _) = dirichlet_logpdf_counted(beta, alpha)?;
    Ok(lp)
}

pub fn dirichlet_logpdf_counted(beta: &[f64], alpha: &[f64]) -> Result<(f64, usize)> {
    if beta.len() != alpha.len() {
        return Err(Error::Dimension(format!(
            "beta of length {} against alpha of length {}",
            beta.len(),
            alpha.len()
        )));
    }
    if beta.iter().any(|&b| b < 0.0) {
        return Err(Error::Domain {
            op: "dirichlet_logpdf",
            reason: "beta has negative entries".into(),
        });
    }
    let total: f64 = beta.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Domain {
            op: "dirichlet_logpdf",
            reason: format!("beta sums to {total}, not 1"),
        });
    }
    let mut clamped = 0usize;
    let mut b: Vec<f64> = beta
        .iter()
        .map(|&v| {
            if v < EPS_SIMPLEX {
                clamped += 1;
                EPS_SIMPLEX
            } else {
                v
            }
        })
        .collect();
    let s: f64 = b.iter().sum();
    for v in &mut b {
        *v /= s;
    }
    let log_b = ln_multivariate_beta(alpha)?;
    let lp = alpha
        .iter()
        .zip(b.iter())
        .map(|(&a, &bv)| (a - 1.0) * bv.ln())
        .sum::<f64>()
        - log_b;
    Ok((lp, clamped))
}

/// `E[β] = α / Σ α_j`. The output lies on the simplex by construction.
pub fn dirichlet_expectation(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|&a| a <= 0.0) {
        return Err(Error::Domain {
            op: "dirichlet_expectation",
            reason: "alpha entries must be positive".into(),
        });
    }
    let sum: f64 = alpha.iter().sum();
    Ok(alpha.iter().map(|&a| a / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn flat_dirichlet_has_unit_density() {
        for beta in [[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]] {
            let lp = dirichlet_logpdf(&beta, &[1.0, 1.0]).unwrap();
            assert!(lp.abs() < 1e-12, "{lp}");
        }
    }

    #[test]
    fn beta_2_2_at_center() {
        // B(2,2) = 1/6; density at (1/2,1/2) = 6·(1/4) = 1.5.
        let lp = dirichlet_logpdf(&[0.5, 0.5], &[2.0, 2.0]).unwrap();
        assert!((lp - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_implementation() {
        use statrs::distribution::{Continuous, Dirichlet};
        let alpha = vec![2.0, 3.0, 4.0];
        let reference = Dirichlet::new(alpha.clone()).unwrap();
        let beta = [0.2, 0.3, 0.5];
        let ours = dirichlet_logpdf(&beta, &alpha).unwrap();
        let theirs = reference.ln_pdf(&nalgebra::DVector::from_row_slice(&beta));
        assert!((ours - theirs).abs() < 1e-10, "{ours} vs {theirs}");
    }

    #[test]
    fn monte_carlo_integral_is_one() {
        // Uniform sampling over the 2-simplex {b1+b2 <= 1} has area 1/2 in the
        // (b1, b2) plane; the density integrates to 1 against Lebesgue measure.
        let alpha = [2.0, 3.0, 4.0];
        let n = 1_000_000usize;
        let mut rng = crate::rng::rng_from(&[2026]);
        let mut acc = 0.0f64;
        for _ in 0..n {
            let mut b1: f64 = rng.gen();
            let mut b2: f64 = rng.gen();
            if b1 + b2 > 1.0 {
                // Fold the square onto the triangle (keeps uniformity).
                b1 = 1.0 - b1;
                b2 = 1.0 - b2;
            }
            let b3 = 1.0 - b1 - b2;
            if b1 < EPS_SIMPLEX || b2 < EPS_SIMPLEX || b3 < EPS_SIMPLEX {
                continue;
            }
            acc += dirichlet_logpdf(&[b1, b2, b3], &alpha).unwrap().exp();
        }
        let integral = acc / n as f64 * 0.5;
        assert!(
            (integral - 1.0).abs() < 0.01,
            "Monte-Carlo integral = {integral}"
        );
    }

    #[test]
    fn expectation_formula() {
        let e = dirichlet_expectation(&[1.0, 1.0, 1.0]).unwrap();
        for v in &e {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let e = dirichlet_expectation(&[2.0, 6.0]).unwrap();
        assert_eq!(e, vec![0.25, 0.75]);
        // If Σα = 1 the expectation is α itself.
        let alpha = [0.6, 0.3, 0.1];
        let e = dirichlet_expectation(&alpha).unwrap();
        for (a, b) in alpha.iter().zip(&e) {
            assert!((a - b).abs() < 1e-15);
        }
        // Exact simplex membership by construction.
        let sum: f64 = e.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(dirichlet_logpdf(&[0.5, 0.6], &[1.0, 1.0]).is_err());
        assert!(dirichlet_logpdf(&[0.5, 0.5], &[1.0, -1.0]).is_err());
        assert!(dirichlet_expectation(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn boundary_point_is_clamped_not_rejected() {
        let (lp, clamped) = dirichlet_logpdf_counted(&[1.0, 0.0], &[2.0, 2.0]).unwrap();
        assert_eq!(clamped, 1);
        assert!(lp.is_finite());
    }
}
