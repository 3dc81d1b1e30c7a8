//! Adaptive Distribution Calibration: anchor contexts, the distribution
//! calibration loss (stop-gradient KL between an anchor-centered Gaussian and
//! an anchor-centered Student-t), and the Dirichlet local-preserving loss.
//!
//! Everything behind a stop-gradient — the calibration distributions, the
//! covariance estimates, the prior distributions, and the entropy weights —
//! is frozen into [`AnchorContexts`] as plain values at build time. The
//! differentiable route recomputes only the Student-t batch distribution from
//! the live embeddings, which is exactly what lets the finite-difference
//! oracle check these losses: Sg quantities stay at their base values in both
//! the analytic and the difference-quotient evaluations.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::align::{diag_mask_bools, offdiag_mask, MASK_LOGIT};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::stats::{
    discretize_over_batch, estimate_covariance, ln_gamma, ln_multivariate_beta, scale_covariance,
    shannon_entropy, BatchDistribution, CovarianceEstimate, DistributionSource, TForm, EPS_SIMPLEX,
};

/// Hyperparameters shared by the DCM/LPM machinery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcParams {
    /// Student-t degrees of freedom (> 2).
    pub rho: f64,
    /// Relative covariance shrinkage.
    pub lambda_shrink: f64,
    /// Entropy floor for the anchor weight `1/max(H, eps)`.
    pub eps_entropy: f64,
    pub t_form: TForm,
}

impl Default for AdcParams {
    fn default() -> Self {
        AdcParams {
            rho: 4.0,
            lambda_shrink: 1e-3,
            eps_entropy: 1e-2,
            t_form: TForm::Standard,
        }
    }
}

impl AdcParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho <= 2.0 {
            return Err(Error::InvalidSpec(format!(
                "rho must exceed 2, got {}",
                self.rho
            )));
        }
        if self.lambda_shrink <= 0.0 {
            return Err(Error::InvalidSpec("lambda_shrink must be positive".into()));
        }
        if self.eps_entropy <= 0.0 {
            return Err(Error::InvalidSpec("eps_entropy must be positive".into()));
        }
        Ok(())
    }
}

/// How the local-preserving term parameterizes its Dirichlet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpmVariant {
    /// `Σ_i log Dir(p_dat | p_pre + 1)`: interior maximizer at p_dat = p_pre.
    Shifted,
    /// Raw density sum with α = p_pre exactly as printed; kept for fidelity
    /// experiments. Overflow-prone at realistic batch sizes.
    Literal,
    /// `Σ_i log Dir(p_dat | c·p_pre)`; `c` large enough keeps the mode interior.
    Concentrated(f64),
}

/// Per-anchor snapshot of the three batch distributions and the entropy
/// weight, taken at context-build time.
#[derive(Debug, Clone)]
pub struct AnchorContext {
    pub anchor_index: usize,
    pub p_cal: BatchDistribution,
    pub p_dat: BatchDistribution,
    pub p_pre: BatchDistribution,
    /// `1 / max(H(p_pre), eps_entropy)`.
    pub weight: f64,
}

/// Frozen calibration state for one batch plus the constants needed to
/// rebuild the differentiable Student-t batch distribution.
pub struct AnchorContexts {
    pub contexts: Vec<AnchorContext>,
    /// Off-diagonal snapshot probabilities below the simplex guard.
    pub clamp_count: usize,
    n: usize,
    k: usize,
    rho: f64,
    t_form: TForm,
    /// Σ'^{-1} as a constant tensor.
    t_inverse: Tensor,
    /// Constant part of the t log-density for the configured form.
    t_log_norm: f64,
    /// n×n, zero diagonal and zero rows for inactive anchors.
    p_cal_mat: Vec<f64>,
    p_pre_mat: Vec<f64>,
    weights: Vec<f64>,
    active: Vec<bool>,
}

/// Estimates both covariances from the live batch and freezes the full
/// calibration state. `z_proj` are the (possibly tape-linked) projected
/// embeddings — only their values are read; `z_pre` are the frozen prior
/// representations, row-aligned with `z_proj`.
pub fn build_anchor_contexts(
    z_proj: &Tensor,
    z_pre: &Tensor,
    params: &AdcParams,
) -> Result<AnchorContexts> {
    let sigma = estimate_covariance(&z_proj.detach(), params.lambda_shrink)?;
    let sigma_pre = estimate_covariance(&z_pre.detach(), params.lambda_shrink)?;
    build_anchor_contexts_with(z_proj, z_pre, &sigma, &sigma_pre, params, None)
}

/// Context builder with explicit covariances and an optional anchor subset;
/// the general entry point behind [`build_anchor_contexts`].
pub fn build_anchor_contexts_with(
    z_proj: &Tensor,
    z_pre: &Tensor,
    sigma: &CovarianceEstimate,
    sigma_pre: &CovarianceEstimate,
    params: &AdcParams,
    anchors: Option<&[usize]>,
) -> Result<AnchorContexts> {
    params.validate()?;
    let shape = z_proj.shape();
    if shape.len() != 2 || shape[0] < 3 {
        return Err(Error::InvalidShape {
            op: "build_anchor_contexts",
            shape: shape.to_vec(),
            reason: "need at least 3 rows so distributions are non-degenerate",
        });
    }
    let (n, k) = (shape[0], shape[1]);
    if z_pre.shape().len() != 2 || z_pre.shape()[0] != n {
        return Err(Error::Dimension(format!(
            "prior batch rows {:?} do not align with projections {:?}",
            z_pre.shape(),
            z_proj.shape()
        )));
    }
    if sigma.dim() != k || sigma_pre.dim() != z_pre.shape()[1] {
        return Err(Error::Dimension(
            "covariance dimensions do not match the batches".into(),
        ));
    }
    let rho = params.rho;
    let sigma_prime = scale_covariance(sigma, rho)?;
    let sigma_prime_pre = scale_covariance(sigma_pre, rho)?;

    let mut active = vec![false; n];
    match anchors {
        None => active.iter_mut().for_each(|a| *a = true),
        Some(list) => {
            for &i in list {
                if i >= n {
                    return Err(Error::Dimension(format!("anchor index {i} out of range")));
                }
                active[i] = true;
            }
        }
    }

    let quad_cal = pairwise_quadratic(z_proj.data(), n, k, sigma.inverse());
    let quad_dat = pairwise_quadratic(z_proj.data(), n, k, sigma_prime.inverse());
    let k_pre = z_pre.shape()[1];
    let quad_pre = pairwise_quadratic(z_pre.data(), n, k_pre, sigma_prime_pre.inverse());

    let gauss_const = -0.5 * (k as f64 * (2.0 * PI).ln() + sigma.log_det());
    let t_const = t_log_normalizer(rho, k as f64, sigma_prime.log_det(), params.t_form);
    let t_const_pre = t_log_normalizer(rho, k_pre as f64, sigma_prime_pre.log_det(), params.t_form);
    let radial = radial_scale(rho, params.t_form);

    let mut p_cal_mat = vec![0.0; n * n];
    let mut p_pre_mat = vec![0.0; n * n];
    let mut weights = vec![0.0; n];
    let mut contexts = Vec::new();
    let mut clamp_count = 0usize;

    for i in 0..n {
        if !active[i] {
            continue;
        }
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let lg: Vec<f64> = others
            .iter()
            .map(|&j| -0.5 * quad_cal[i * n + j] + gauss_const)
            .collect();
        let lt: Vec<f64> = others
            .iter()
            .map(|&j| t_const - 0.5 * (rho + k as f64) * (1.0 + radial * quad_dat[i * n + j]).ln())
            .collect();
        let lp: Vec<f64> = others
            .iter()
            .map(|&j| {
                t_const_pre
                    - 0.5 * (rho + k_pre as f64) * (1.0 + radial * quad_pre[i * n + j]).ln()
            })
            .collect();
        let p_cal = discretize_over_batch(&lg, i, DistributionSource::Calibration)?;
        let p_dat = discretize_over_batch(&lt, i, DistributionSource::Data)?;
        let p_pre = discretize_over_batch(&lp, i, DistributionSource::Prior)?;
        let entropy = shannon_entropy(&p_pre.probs)?;
        let weight = 1.0 / entropy.max(params.eps_entropy);
        for (slot, &j) in others.iter().enumerate() {
            p_cal_mat[i * n + j] = p_cal.probs[slot];
            p_pre_mat[i * n + j] = p_pre.probs[slot];
            if p_dat.probs[slot] < EPS_SIMPLEX {
                clamp_count += 1;
            }
        }
        weights[i] = weight;
        contexts.push(AnchorContext {
            anchor_index: i,
            p_cal,
            p_dat,
            p_pre,
            weight,
        });
    }

    Ok(AnchorContexts {
        contexts,
        clamp_count,
        n,
        k,
        rho,
        t_form: params.t_form,
        t_inverse: sigma_prime.inverse_tensor(),
        t_log_norm: t_const,
        p_cal_mat,
        p_pre_mat,
        weights,
        active,
    })
}

fn t_log_normalizer(rho: f64, k: f64, log_det: f64, form: TForm) -> f64 {
    let shape = ln_gamma((rho + k) / 2.0) - ln_gamma(rho / 2.0);
    match form {
        TForm::Standard => shape - 0.5 * k * (rho * PI).ln() - 0.5 * log_det,
        TForm::PaperLiteral => shape - 0.5 * rho * rho.ln() - 0.5 * rho * PI.ln() - 0.5 * log_det,
    }
}

fn radial_scale(rho: f64, form: TForm) -> f64 {
    match form {
        TForm::Standard => 1.0 / rho,
        TForm::PaperLiteral => 1.0,
    }
}

/// All-pairs Mahalanobis-style quadratic forms via `Q = Z A Zᵀ`:
/// `quad[i][j] = (z_i - z_j)ᵀ A (z_i - z_j) = q_ii + q_jj - 2 q_ij`.
fn pairwise_quadratic(z: &[f64], n: usize, k: usize, inv: &DMatrix<f64>) -> Vec<f64> {
    let mut za = vec![0.0; n * k];
    for i in 0..n {
        let row = &z[i * k..(i + 1) * k];
        let out = &mut za[i * k..(i + 1) * k];
        for b in 0..k {
            let v = row[b];
            for (c, o) in out.iter_mut().enumerate() {
                *o += v * inv[(b, c)];
            }
        }
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        let zai = &za[i * k..(i + 1) * k];
        for j in 0..n {
            let zj = &z[j * k..(j + 1) * k];
            let mut s = 0.0;
            for c in 0..k {
                s += zai[c] * zj[c];
            }
            q[i * n + j] = s;
        }
    }
    let mut quad = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            quad[i * n + j] = if i == j {
                0.0
            } else {
                q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j]
            };
        }
    }
    quad
}

impl AnchorContexts {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Differentiable per-row log Student-t batch distribution (n×n with the
    /// diagonal masked out), rebuilt from live embeddings against the frozen
    /// `Σ'`.
    pub fn log_p_dat(&self, z_proj: &Tensor) -> Result<Tensor> {
        if z_proj.shape() != [self.n, self.k] {
            return Err(Error::Dimension(format!(
                "expected {}x{} projections, got {:?}",
                self.n,
                self.k,
                z_proj.shape()
            )));
        }
        let za = z_proj.matmul(&self.t_inverse)?;
        let q = za.matmul(&z_proj.transpose()?)?;
        let d = q.diag()?;
        let quad = q.mul_scalar(-2.0)?.add_colvec(&d)?.add_rowvec(&d)?;
        let bracket = quad
            .mul_scalar(radial_scale(self.rho, self.t_form))?
            .add_scalar(1.0)?
            .ln()?;
        let lt = bracket
            .mul_scalar(-0.5 * (self.rho + self.k as f64))?
            .add_scalar(self.t_log_norm)?;
        lt.masked_fill(&diag_mask_bools(self.n), MASK_LOGIT)?
            .log_softmax_rows()
    }

    /// Weighted stop-gradient KL of Eq-13/18 shape:
    /// `Σ_i w_i Σ_{j≠i} Sg(p_cal)·[log Sg(p_cal) - log p_dat]`.
    pub(crate) fn dcm_from(&self, log_p_dat: &Tensor) -> Result<Tensor> {
        let n = self.n;
        let mut coef = vec![0.0; n * n];
        let mut const_term = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = self.p_cal_mat[i * n + j];
                if p > 0.0 {
                    let c = self.weights[i] * p;
                    coef[i * n + j] = c;
                    const_term += c * p.ln();
                }
            }
        }
        let coef = Tensor::matrix(coef, n, n)?;
        coef.mul(log_p_dat)?
            .sum()?
            .neg()?
            .add_scalar(const_term)
    }

    /// Clamped-and-renormalized log probabilities for the Dirichlet terms:
    /// entries floored at the simplex guard on the off-diagonal support.
    pub(crate) fn log_p_dat_interior(&self, log_p_dat: &Tensor) -> Result<Tensor> {
        let p = log_p_dat.exp()?;
        let clamped = p.clamp_min(EPS_SIMPLEX)?;
        let support = clamped.mul(&offdiag_mask(self.n))?;
        let renorm = support.row_sum()?;
        clamped.ln()?.add_colvec(&renorm.ln()?.neg()?)
    }

    /// Dirichlet local-preserving term (to be maximized); gradient flows only
    /// through `p_dat`.
    pub(crate) fn lpm_from(&self, log_pd: &Tensor, variant: LpmVariant) -> Result<Tensor> {
        let n = self.n;
        match variant {
            LpmVariant::Shifted => {
                // Σ_i [Σ_j p_pre·log p_dat - log B(p_pre + 1)]
                let mut const_term = 0.0;
                for ctx in &self.contexts {
                    let alpha: Vec<f64> = ctx.p_pre.probs.iter().map(|&p| p + 1.0).collect();
                    const_term -= ln_multivariate_beta(&alpha)?;
                }
                let coef = Tensor::matrix(self.p_pre_mat.clone(), n, n)?;
                coef.mul(log_pd)?.sum()?.add_scalar(const_term)
            }
            LpmVariant::Concentrated(c) => {
                if c <= 0.0 {
                    return Err(Error::InvalidSpec(
                        "concentrated LPM needs a positive concentration".into(),
                    ));
                }
                let mut coef = vec![0.0; n * n];
                let mut const_term = 0.0;
                for ctx in &self.contexts {
                    let i = ctx.anchor_index;
                    let alpha: Vec<f64> = ctx
                        .p_pre
                        .probs
                        .iter()
                        .map(|&p| (c * p).max(EPS_SIMPLEX))
                        .collect();
                    const_term -= ln_multivariate_beta(&alpha)?;
                    for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
                        coef[i * n + j] = alpha[slot] - 1.0;
                    }
                }
                let coef = Tensor::matrix(coef, n, n)?;
                coef.mul(log_pd)?.sum()?.add_scalar(const_term)
            }
            LpmVariant::Literal => {
                // Σ_i Dir(p_dat | p_pre) as raw density values.
                let mut coef = vec![0.0; n * n];
                let mut consts = vec![0.0; n];
                let mut mask = vec![0.0; n];
                for ctx in &self.contexts {
                    let i = ctx.anchor_index;
                    let alpha: Vec<f64> = ctx
                        .p_pre
                        .probs
                        .iter()
                        .map(|&p| p.max(EPS_SIMPLEX))
                        .collect();
                    consts[i] = -ln_multivariate_beta(&alpha)?;
                    mask[i] = 1.0;
                    for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
                        coef[i * n + j] = alpha[slot] - 1.0;
                    }
                }
                let coef = Tensor::matrix(coef, n, n)?;
                let rows = coef.mul(log_pd)?.row_sum()?;
                let log_density = rows.add(&Tensor::new(consts, vec![n])?)?;
                log_density
                    .exp()?
                    .mul(&Tensor::new(mask, vec![n])?)?
                    .sum()
            }
        }
    }

    /// Per-anchor discrete KL between the calibration and data snapshots.
    pub fn anchor_kls(&self) -> Vec<f64> {
        self.contexts
            .iter()
            .map(|ctx| discrete_kl(&ctx.p_cal.probs, &ctx.p_dat.probs))
            .collect()
    }

    /// Consistency probe used by tests: the frozen snapshots against the
    /// per-pair density functions.
    #[doc(hidden)]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_anchor_active(&self, i: usize) -> bool {
        self.active[i]
    }
}

/// `Σ p log(p/q)` with the `0·log 0 := 0` convention; `q` floored at 1e-300.
pub fn discrete_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&pi, &qi)| {
            if pi > 0.0 {
                pi * (pi.ln() - qi.max(1e-300).ln())
            } else {
                0.0
            }
        })
        .sum()
}

/// `Σ_i w_i·KL(Sg(p_cal_i) || p_dat_i)` rebuilt from live embeddings.
pub fn dcm_loss(contexts: &AnchorContexts, z_proj: &Tensor) -> Result<Tensor> {
    contexts.dcm_from(&contexts.log_p_dat(z_proj)?)
}

/// `Σ_i log Dir(p_dat_i | ·)` in the chosen parameterization.
pub fn lpm_loss(contexts: &AnchorContexts, z_proj: &Tensor, variant: LpmVariant) -> Result<Tensor> {
    let log_p_dat = contexts.log_p_dat(z_proj)?;
    let log_pd = contexts.log_p_dat_interior(&log_p_dat)?;
    contexts.lpm_from(&log_pd, variant)
}

/// Per-anchor LPM value on plain probability vectors; the independent route
/// used by optimality tests.
pub fn lpm_anchor_term(p_dat: &[f64], p_pre: &[f64], variant: LpmVariant) -> Result<f64> {
    let interior: Vec<f64> = p_dat.iter().map(|&p| p.max(EPS_SIMPLEX)).collect();
    let total: f64 = interior.iter().sum();
    let interior: Vec<f64> = interior.iter().map(|p| p / total).collect();
    match variant {
        LpmVariant::Shifted => {
            let alpha: Vec<f64> = p_pre.iter().map(|&p| p + 1.0).collect();
            let cross: f64 = p_pre
                .iter()
                .zip(&interior)
                .map(|(&a, &b)| a * b.ln())
                .sum();
            Ok(cross - ln_multivariate_beta(&alpha)?)
        }
        LpmVariant::Concentrated(c) => {
            let alpha: Vec<f64> = p_pre.iter().map(|&p| (c * p).max(EPS_SIMPLEX)).collect();
            let cross: f64 = alpha
                .iter()
                .zip(&interior)
                .map(|(&a, &b)| (a - 1.0) * b.ln())
                .sum();
            Ok(cross - ln_multivariate_beta(&alpha)?)
        }
        LpmVariant::Literal => {
            let alpha: Vec<f64> = p_pre.iter().map(|&p| p.max(EPS_SIMPLEX)).collect();
            let cross: f64 = alpha
                .iter()
                .zip(&interior)
                .map(|(&a, &b)| (a - 1.0) * b.ln())
                .sum();
            Ok((cross - ln_multivariate_beta(&alpha)?).exp())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradcheck::finite_difference_check, Tape};
    use crate::stats::{gaussian_logpdf, student_t_logpdf};
    use rand::Rng;

    fn random_batch(n: usize, k: usize, seed: u64) -> Tensor {
        let mut rng = crate::rng::rng_from(&[seed]);
        Tensor::matrix((0..n * k).map(|_| rng.gen_range(-1.5..1.5)).collect(), n, k).unwrap()
    }

    fn default_contexts(n: usize, k: usize, seed: u64) -> (AnchorContexts, Tensor) {
        let z = random_batch(n, k, seed);
        let ctx = build_anchor_contexts(&z, &z, &AdcParams::default()).unwrap();
        (ctx, z)
    }

    #[test]
    fn symmetric_three_point_configuration() {
        // Anchor 0 equidistant from the other two: uniform distributions and
        // weight 1/ln 2.
        let z = Tensor::matrix(vec![0.0, 0.0, 1.0, 0.5, -1.0, -0.5], 3, 2).unwrap();
        let ctx = build_anchor_contexts(&z, &z, &AdcParams::default()).unwrap();
        let c0 = &ctx.contexts[0];
        assert_eq!(c0.p_cal.probs, vec![0.5, 0.5]);
        assert_eq!(c0.p_dat.probs, vec![0.5, 0.5]);
        assert_eq!(c0.p_pre.probs, vec![0.5, 0.5]);
        assert!((c0.weight - 1.0 / 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn snapshots_agree_with_per_pair_densities() {
        // The batched quadratic-form route must reproduce the per-pair
        // density functions exactly (dual-route check).
        let z = random_batch(6, 3, 11);
        let params = AdcParams::default();
        let sigma = estimate_covariance(&z, params.lambda_shrink).unwrap();
        let sigma_prime = scale_covariance(&sigma, params.rho).unwrap();
        let ctx = build_anchor_contexts(&z, &z, &params).unwrap();
        for i in 0..6 {
            let anchor = z.data()[i * 3..(i + 1) * 3].to_vec();
            let mut lg = Vec::new();
            let mut lt = Vec::new();
            for j in (0..6).filter(|&j| j != i) {
                let zj = &z.data()[j * 3..(j + 1) * 3];
                lg.push(gaussian_logpdf(zj, &anchor, &sigma).unwrap());
                lt.push(
                    student_t_logpdf(zj, &anchor, &sigma_prime, params.rho, TForm::Standard)
                        .unwrap(),
                );
            }
            let p_cal = discretize_over_batch(&lg, i, DistributionSource::Calibration).unwrap();
            let p_dat = discretize_over_batch(&lt, i, DistributionSource::Data).unwrap();
            for (a, b) in p_cal.probs.iter().zip(&ctx.contexts[i].p_cal.probs) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in p_dat.probs.iter().zip(&ctx.contexts[i].p_dat.probs) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn distributions_sum_to_one() {
        for seed in 0..5 {
            let (ctx, _) = default_contexts(8, 3, seed);
            for c in &ctx.contexts {
                for probs in [&c.p_cal.probs, &c.p_dat.probs, &c.p_pre.probs] {
                    let sum: f64 = probs.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn tape_route_matches_snapshot_probabilities() {
        let (ctx, z) = default_contexts(7, 4, 3);
        let log_p = ctx.log_p_dat(&z).unwrap();
        let p = log_p.exp().unwrap();
        let n = 7;
        for c in &ctx.contexts {
            let i = c.anchor_index;
            for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
                assert!((p.data()[i * n + j] - c.p_dat.probs[slot]).abs() < 1e-12);
            }
            assert_eq!(p.data()[i * n + i], 0.0); // masked diagonal underflows to zero
        }
    }

    #[test]
    fn kl_properties() {
        let (ctx, _) = default_contexts(9, 3, 17);
        for kl in ctx.anchor_kls() {
            assert!(kl >= -1e-12);
        }
        let p = [0.3, 0.5, 0.2];
        assert!(discrete_kl(&p, &p).abs() < 1e-12);
        assert!(discrete_kl(&[1.0, 0.0], &[0.5, 0.5]) > 0.0);
    }

    #[test]
    fn dcm_value_is_weighted_kl_of_snapshots() {
        let (ctx, z) = default_contexts(6, 3, 23);
        let loss = dcm_loss(&ctx, &z).unwrap().scalar().unwrap();
        let expect: f64 = ctx
            .contexts
            .iter()
            .zip(ctx.anchor_kls())
            .map(|(c, kl)| c.weight * kl)
            .sum();
        assert!((loss - expect).abs() < 1e-9, "{loss} vs {expect}");
    }

    #[test]
    fn dcm_gradient_matches_finite_differences() {
        let (ctx, z) = default_contexts(6, 4, 5);
        let f = |t: &Tensor| dcm_loss(&ctx, t);
        let err = finite_difference_check(f, &z, 1e-5).unwrap();
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn lpm_gradients_match_finite_differences() {
        let (ctx, z) = default_contexts(6, 4, 7);
        for variant in [
            LpmVariant::Shifted,
            LpmVariant::Literal,
            LpmVariant::Concentrated(12.0),
        ] {
            let f = |t: &Tensor| lpm_loss(&ctx, t, variant);
            let err = finite_difference_check(f, &z, 1e-5).unwrap();
            assert!(err < 1e-4, "{variant:?}: err = {err}");
        }
    }

    #[test]
    fn shifted_lpm_peaks_at_prior() {
        let mut rng = crate::rng::rng_from(&[31]);
        for k in [3usize, 7] {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p_pre: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let at_prior = lpm_anchor_term(&p_pre, &p_pre, LpmVariant::Shifted).unwrap();
            for _ in 0..200 {
                let noisy: Vec<f64> = p_pre
                    .iter()
                    .map(|&p| (p + rng.gen_range(-0.05..0.05)).max(1e-6))
                    .collect();
                let t: f64 = noisy.iter().sum();
                let noisy: Vec<f64> = noisy.iter().map(|v| v / t).collect();
                let perturbed = lpm_anchor_term(&noisy, &p_pre, LpmVariant::Shifted).unwrap();
                assert!(perturbed <= at_prior + 1e-12);
            }
        }
    }

    #[test]
    fn shifted_lpm_value_at_prior_is_entropy_plus_beta() {
        // Per-anchor value at p_dat == p_pre: -H(p_pre) - log B(p_pre + 1).
        let p_prior = [0.5, 0.3, 0.2];
        let v = lpm_anchor_term(&p_prior, &p_prior, LpmVariant::Shifted).unwrap();
        let alpha: Vec<f64> = p_prior.iter().map(|p| p + 1.0).collect();
        let expect =
            -shannon_entropy(&p_prior).unwrap() - ln_multivariate_beta(&alpha).unwrap();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn flat_dirichlet_concentrated_case_has_zero_gradient() {
        // K=2, p_pre=(1/2,1/2), concentrated c=2 gives α=(1,1): the density is
        // constant 1, so the per-anchor value is 0 regardless of p_dat.
        let v1 = lpm_anchor_term(&[0.5, 0.5], &[0.5, 0.5], LpmVariant::Concentrated(2.0)).unwrap();
        let v2 = lpm_anchor_term(&[0.9, 0.1], &[0.5, 0.5], LpmVariant::Concentrated(2.0)).unwrap();
        assert!(v1.abs() < 1e-12);
        assert!(v2.abs() < 1e-12);
    }

    #[test]
    fn prior_path_receives_zero_gradient() {
        // Even when the prior features come from a tape leaf, the contexts
        // freeze them; backward must return exactly zero for that leaf.
        let tape = Tape::new();
        let z_values = random_batch(5, 3, 41);
        let x_pre = tape.var(&random_batch(5, 3, 42));
        let z = tape.var(&z_values);
        let ctx = build_anchor_contexts(&z, &x_pre.detach(), &AdcParams::default()).unwrap();
        let loss = dcm_loss(&ctx, &z).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert!(grads.wrt(&x_pre).unwrap().data().iter().all(|&g| g == 0.0));
        let gz = grads.wrt(&z).unwrap();
        assert!(gz.data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn anchor_subset_restricts_contributions() {
        let z = Tensor::matrix(vec![0.0, 1.0, 3.0], 3, 1).unwrap();
        let params = AdcParams::default();
        let sigma = estimate_covariance(&z, params.lambda_shrink).unwrap();
        let ctx = build_anchor_contexts_with(&z, &z, &sigma, &sigma, &params, Some(&[0])).unwrap();
        assert_eq!(ctx.contexts.len(), 1);
        assert_eq!(ctx.contexts[0].anchor_index, 0);
        assert!(ctx.is_anchor_active(0));
        assert!(!ctx.is_anchor_active(1));
    }
}
