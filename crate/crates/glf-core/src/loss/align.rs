//! Aligning parts: InfoNCE, pure alignment, SimSiam-style, Barlow Twins,
//! plus the Gaussian-kernel hyperspherical uniformity potential.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// 0/1 matrix with zero diagonal.
pub(crate) fn offdiag_mask(n: usize) -> Tensor {
    let mut data = vec![1.0; n * n];
    for i in 0..n {
        data[i * n + i] = 0.0;
    }
    Tensor::matrix(data, n, n).unwrap()
}

pub(crate) fn diag_mask_bools(n: usize) -> Vec<bool> {
    let mut mask = vec![false; n * n];
    for i in 0..n {
        mask[i * n + i] = true;
    }
    mask
}

/// Finite stand-in for -inf when masking logits: exp(x - max) underflows to
/// exactly zero after the max shift, while every tensor stays finite.
pub(crate) const MASK_LOGIT: f64 = -1e9;

/// NT-Xent over 2m views: for each view the positive is its sibling and the
/// negatives are all 2m-2 other views; mean of `-log softmax(sim/τ)`.
pub fn info_nce(z1: &Tensor, z2: &Tensor, tau: f64) -> Result<Tensor> {
    if tau <= 0.0 {
        return Err(Error::Domain {
            op: "info_nce",
            reason: "temperature must be positive".into(),
        });
    }
    let m = paired_rows(z1, z2, "info_nce")?;
    let zn1 = z1.normalize_rows()?;
    let zn2 = z2.normalize_rows()?;
    let z = Tensor::concat_rows(&[&zn1, &zn2])?;
    let sims = z.matmul(&z.transpose()?)?.mul_scalar(1.0 / tau)?;
    let masked = sims.masked_fill(&diag_mask_bools(2 * m), MASK_LOGIT)?;
    let lse = masked.log_sum_exp_rows()?;
    let sibling: Vec<usize> = (0..2 * m).map(|i| (i + m) % (2 * m)).collect();
    let positives = sims.select_per_row(&sibling)?;
    lse.sub(&positives)?.mean()
}

/// First term of the alignment/uniformity decomposition:
/// `-(1/τ) · mean_i sim(z1_i, z2_i)`.
pub fn align_only(z1: &Tensor, z2: &Tensor, tau: f64) -> Result<Tensor> {
    if tau <= 0.0 {
        return Err(Error::Domain {
            op: "align_only",
            reason: "temperature must be positive".into(),
        });
    }
    paired_rows(z1, z2, "align_only")?;
    let zn1 = z1.normalize_rows()?;
    let zn2 = z2.normalize_rows()?;
    zn1.mul(&zn2)?.row_sum()?.mean()?.mul_scalar(-1.0 / tau)
}

/// Gaussian-kernel uniformity: `log mean_{i≠j} exp(-t·‖z_i - z_j‖²)` over
/// unit-normalized rows.
pub fn uniformity_sphere(z: &Tensor, t: f64) -> Result<Tensor> {
    let shape = z.shape();
    if shape.len() != 2 || shape[0] < 2 {
        return Err(Error::InvalidShape {
            op: "uniformity_sphere",
            shape: shape.to_vec(),
            reason: "need at least two rows",
        });
    }
    let m = shape[0];
    for i in 0..m {
        let norm: f64 = z.data()[i * shape[1]..(i + 1) * shape[1]]
            .iter()
            .map(|v| v * v)
            .sum();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Domain {
                op: "uniformity_sphere",
                reason: format!("row {i} is not unit-normalized (‖·‖² = {norm})"),
            });
        }
    }
    let gram = z.matmul(&z.transpose()?)?;
    let q = gram.diag()?;
    let d2 = gram.mul_scalar(-2.0)?.add_colvec(&q)?.add_rowvec(&q)?;
    let kernel = d2.mul_scalar(-t)?.exp()?;
    let total = kernel.mul(&offdiag_mask(m))?.sum()?;
    total.mul_scalar(1.0 / (m * (m - 1)) as f64)?.ln()
}

/// SimSiam-style alignment on predictor outputs against stop-gradient
/// targets: `-½·mean[ sim(p1, target2) + sim(p2, target1) ]`.
///
/// Targets must already be detached; passing a tape-linked target is an
/// error, which keeps the stop-gradient contract visible at the call site
/// and lets the finite-difference oracle freeze targets at the base point.
pub fn simsiam_align(
    p1: &Tensor,
    p2: &Tensor,
    target1: &Tensor,
    target2: &Tensor,
) -> Result<Tensor> {
    for (name, t) in [("target1", target1), ("target2", target2)] {
        if t.is_on_tape() {
            return Err(Error::Domain {
                op: "simsiam_align",
                reason: format!("{name} must be stop-gradient (detached)"),
            });
        }
    }
    paired_rows(p1, target2, "simsiam_align")?;
    paired_rows(p2, target1, "simsiam_align")?;
    let s1 = p1
        .normalize_rows()?
        .mul(&target2.normalize_rows()?)?
        .row_sum()?
        .mean()?;
    let s2 = p2
        .normalize_rows()?
        .mul(&target1.normalize_rows()?)?
        .row_sum()?
        .mean()?;
    s1.add(&s2)?.mul_scalar(-0.5)
}

/// Barlow Twins: batch-normalize each dimension (ε = 1e-5 in the divisor),
/// form the cross-correlation `C = (1/m)·ẑ1ᵀẑ2`, and penalize
/// `Σ_d (1 - C_dd)² + λ·Σ_{d≠d'} C_{dd'}²`.
pub fn barlow_twins(z1: &Tensor, z2: &Tensor, lambda_bt: f64) -> Result<Tensor> {
    if lambda_bt < 0.0 {
        return Err(Error::Domain {
            op: "barlow_twins",
            reason: "off-diagonal weight must be non-negative".into(),
        });
    }
    let m = paired_rows(z1, z2, "barlow_twins")?;
    if m < 2 {
        return Err(Error::InvalidShape {
            op: "barlow_twins",
            shape: z1.shape().to_vec(),
            reason: "need at least two rows to batch-normalize",
        });
    }
    let d = z1.shape()[1];
    let h1 = batch_normalize_dims(z1)?;
    let h2 = batch_normalize_dims(z2)?;
    // h are d×m; C = (1/m)·ẑ1ᵀẑ2 is d×d.
    let c = h1.matmul(&h2.transpose()?)?.mul_scalar(1.0 / m as f64)?;
    let on_diag = c.diag()?.neg()?.add_scalar(1.0)?.powf(2.0)?.sum()?;
    if lambda_bt == 0.0 {
        return Ok(on_diag);
    }
    let off_diag = c.mul(&offdiag_mask(d))?.powf(2.0)?.sum()?;
    on_diag.add(&off_diag.mul_scalar(lambda_bt)?)
}

/// Zero mean, unit variance per embedding dimension over the batch; returns
/// the transposed d×m normalized matrix.
fn batch_normalize_dims(z: &Tensor) -> Result<Tensor> {
    let m = z.shape()[0] as f64;
    let t = z.transpose()?;
    let mean = t.row_sum()?.mul_scalar(1.0 / m)?;
    let centered = t.add_colvec(&mean.neg()?)?;
    let var = centered.mul(&centered)?.row_sum()?.mul_scalar(1.0 / m)?;
    let inv_std = var.add_scalar(1e-5)?.powf(-0.5)?;
    centered.mul_colvec(&inv_std)
}

fn paired_rows(a: &Tensor, b: &Tensor, op: &'static str) -> Result<usize> {
    if a.shape().len() != 2 || a.shape() != b.shape() || a.shape()[0] == 0 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(a.shape()[0])
}
