//! Aligning parts, constraining parts, and the composite objective
//! `L = L_ctr + ν·L_DCM - υ·L_LPM`.

mod adc;
mod align;
mod baselines;
pub mod suite;

pub use adc::{
    build_anchor_contexts, build_anchor_contexts_with, dcm_loss, discrete_kl, lpm_anchor_term,
    lpm_loss, AdcParams, AnchorContext, AnchorContexts, LpmVariant,
};
pub use align::{align_only, barlow_twins, info_nce, simsiam_align, uniformity_sphere};
pub use baselines::{
    baseline_loss, constraint_baseline, prepare_baseline, BaselineAux, BaselineKind,
    BaselineParams,
};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AligningKind {
    InfoNce,
    AlignOnly,
    SimSiam,
    BarlowTwins,
}

/// Descriptor for the aligning part of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AligningPartSpec {
    pub kind: AligningKind,
    /// Temperature (info_nce / align_only).
    pub tau: f64,
    /// Off-diagonal weight (barlow_twins).
    pub lambda_bt: f64,
}

impl Default for AligningPartSpec {
    fn default() -> Self {
        AligningPartSpec {
            kind: AligningKind::InfoNce,
            tau: 0.5,
            lambda_bt: 5e-3,
        }
    }
}

impl AligningPartSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::InvalidSpec("tau must be positive".into()));
        }
        if self.lambda_bt < 0.0 {
            return Err(Error::InvalidSpec("lambda_bt must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstrainingKind {
    None,
    Dcm,
    Lpm,
    Adc,
    UniformSphere,
    UniformCube,
    GaussFull,
    GaussIdentity,
    GaussMixture,
}

/// Descriptor for the constraining part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainingPartSpec {
    pub kind: ConstrainingKind,
    pub adc: AdcParams,
    /// DCM weight ν; doubles as the generic weight for baseline constraints.
    pub nu: f64,
    /// LPM weight υ.
    pub upsilon: f64,
    pub lpm_variant: LpmVariant,
    pub baseline: BaselineParams,
}

impl Default for ConstrainingPartSpec {
    fn default() -> Self {
        ConstrainingPartSpec {
            kind: ConstrainingKind::None,
            adc: AdcParams::default(),
            nu: 1.0,
            upsilon: 1.0,
            lpm_variant: LpmVariant::Shifted,
            baseline: BaselineParams::default(),
        }
    }
}

impl ConstrainingPartSpec {
    pub fn validate(&self) -> Result<()> {
        self.adc.validate()?;
        if self.nu < 0.0 || self.upsilon < 0.0 {
            return Err(Error::InvalidSpec(
                "constraint weights must be non-negative".into(),
            ));
        }
        if let LpmVariant::Concentrated(c) = self.lpm_variant {
            if c <= 0.0 {
                return Err(Error::InvalidSpec(
                    "concentrated LPM needs a positive concentration".into(),
                ));
            }
        }
        Ok(())
    }

    /// Effective (ν, υ) after the kind gates individual modules.
    pub fn effective_weights(&self) -> (f64, f64) {
        match self.kind {
            ConstrainingKind::Dcm => (self.nu, 0.0),
            ConstrainingKind::Lpm => (0.0, self.upsilon),
            ConstrainingKind::Adc => (self.nu, self.upsilon),
            _ => (0.0, 0.0),
        }
    }
}

/// Per-component values of one objective evaluation, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_ctr: f64,
    pub l_dcm: f64,
    pub l_lpm: f64,
    pub total: f64,
}

/// `L = l_ctr + ν·dcm - υ·lpm`. Terms with a zero coefficient are skipped
/// entirely, so `ν = υ = 0` reproduces the aligning part bitwise (value and
/// gradients). When either coefficient is active, `contexts` and the live
/// projections must be provided; the Student-t batch distribution is built
/// once and shared by both terms.
pub fn total_objective(
    l_ctr: &Tensor,
    contexts: Option<&AnchorContexts>,
    z_proj: Option<&Tensor>,
    nu: f64,
    upsilon: f64,
    variant: LpmVariant,
) -> Result<(Tensor, LossBreakdown)> {
    if nu < 0.0 || upsilon < 0.0 {
        return Err(Error::Domain {
            op: "total_objective",
            reason: "weights must be non-negative".into(),
        });
    }
    let ctr_value = l_ctr.scalar()?;
    if nu == 0.0 && upsilon == 0.0 {
        return Ok((
            l_ctr.clone(),
            LossBreakdown {
                l_ctr: ctr_value,
                l_dcm: 0.0,
                l_lpm: 0.0,
                total: ctr_value,
            },
        ));
    }
    let (contexts, z_proj) = match (contexts, z_proj) {
        (Some(c), Some(z)) => (c, z),
        _ => {
            return Err(Error::Domain {
                op: "total_objective",
                reason: "active DCM/LPM weights need anchor contexts and projections".into(),
            })
        }
    };
    let log_p_dat = contexts.log_p_dat(z_proj)?;
    let mut total = l_ctr.clone();
    let mut l_dcm = 0.0;
    let mut l_lpm = 0.0;
    if nu > 0.0 {
        let dcm = contexts.dcm_from(&log_p_dat)?;
        l_dcm = dcm.scalar()?;
        total = total.add(&dcm.mul_scalar(nu)?)?;
    }
    if upsilon > 0.0 {
        let log_pd = contexts.log_p_dat_interior(&log_p_dat)?;
        let lpm = contexts.lpm_from(&log_pd, variant)?;
        l_lpm = lpm.scalar()?;
        total = total.sub(&lpm.mul_scalar(upsilon)?)?;
    }
    let breakdown = LossBreakdown {
        l_ctr: ctr_value,
        l_dcm,
        l_lpm,
        total: total.scalar()?,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(m: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = crate::rng::rng_from(&[seed]);
        Tensor::matrix((0..m * d).map(|_| rng.gen_range(-1.0..1.0)).collect(), m, d).unwrap()
    }

    #[test]
    fn zero_weights_reduce_to_aligning_part_bitwise() {
        let z1 = random_batch(4, 3, 1);
        let z2 = random_batch(4, 3, 2);
        let l_ctr = info_nce(&z1, &z2, 0.5).unwrap();
        let (total, bd) =
            total_objective(&l_ctr, None, None, 0.0, 0.0, LpmVariant::Shifted).unwrap();
        assert_eq!(
            total.scalar().unwrap().to_bits(),
            l_ctr.scalar().unwrap().to_bits()
        );
        assert_eq!(bd.l_dcm, 0.0);
        assert_eq!(bd.l_lpm, 0.0);
    }

    #[test]
    fn composition_tracks_components() {
        let z = random_batch(6, 3, 3);
        let ctx = build_anchor_contexts(&z, &z, &AdcParams::default()).unwrap();
        let l_ctr = Tensor::scalar_value(2.0).unwrap();
        let (total, bd) =
            total_objective(&l_ctr, Some(&ctx), Some(&z), 0.7, 0.3, LpmVariant::Shifted).unwrap();
        let expect = 2.0 + 0.7 * bd.l_dcm - 0.3 * bd.l_lpm;
        assert!((total.scalar().unwrap() - expect).abs() < 1e-12);
        assert!((bd.total - expect).abs() < 1e-12);
    }

    #[test]
    fn active_weights_without_contexts_is_an_error() {
        let l_ctr = Tensor::scalar_value(1.0).unwrap();
        assert!(total_objective(&l_ctr, None, None, 1.0, 0.0, LpmVariant::Shifted).is_err());
    }

    #[test]
    fn full_objective_gradient_matches_finite_differences() {
        use crate::autodiff::gradcheck::finite_difference_check;
        // ν = υ = 1 on a random 6x4 batch; contexts frozen at the base point.
        let z = random_batch(6, 4, 9);
        let ctx = build_anchor_contexts(&z, &z, &AdcParams::default()).unwrap();
        let f = |t: &Tensor| {
            let l_ctr = t.mul(t)?.mean()?; // simple differentiable stand-in
            Ok(total_objective(&l_ctr, Some(&ctx), Some(t), 1.0, 1.0, LpmVariant::Shifted)?.0)
        };
        let err = finite_difference_check(f, &z, 1e-5).unwrap();
        assert!(err < 1e-4, "err = {err}");
    }
}
