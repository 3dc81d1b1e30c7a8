//! Stochastic vector augmentations: additive noise, inverted dropout, and
//! multiplicative scale jitter. The vector analog of image-style view
//! generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    /// Additive Gaussian standard deviation.
    pub noise_sigma: f64,
    /// Per-coordinate zeroing probability (inverted-dropout rescaling).
    pub dropout_p: f64,
    /// Multiplicative jitter interval.
    pub scale_min: f64,
    pub scale_max: f64,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidSpec("noise_sigma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidSpec("dropout_p must lie in [0, 1)".into()));
        }
        if self.scale_min <= 0.0 || self.scale_max < self.scale_min {
            return Err(Error::InvalidSpec(
                "scale range must satisfy 0 < min <= max".into(),
            ));
        }
        Ok(())
    }

    pub fn identity() -> Self {
        AugmentationSpec {
            noise_sigma: 0.0,
            dropout_p: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
        }
    }
}

fn one_view(x: &[f64], spec: &AugmentationSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - spec.dropout_p;
    let mut v: Vec<f64> = x
        .iter()
        .map(|&xi| {
            if spec.dropout_p > 0.0 && rng.gen::<f64>() < spec.dropout_p {
                0.0
            } else {
                xi / keep
            }
        })
        .collect();
    let s = if spec.scale_max > spec.scale_min {
        rng.gen_range(spec.scale_min..spec.scale_max)
    } else {
        spec.scale_min
    };
    for vi in &mut v {
        *vi *= s;
        if spec.noise_sigma > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            *vi += spec.noise_sigma * g;
        }
    }
    v
}

/// Two independent augmented views of one sample:
/// `view = (x ⊙ mask/(1-p)) · s + ε`.
pub fn augment_pair(
    x: &[f64],
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    (one_view(x, spec, rng), one_view(x, spec, rng))
}
