//! Frozen prior encoder `f_pre`.
//!
//! The prior encoder is never trained and its output is always tape-detached.
//! Three kinds: identity (Table-2 style direct similarity), a fixed seeded
//! random projection, and a linear map loaded from a GLF1 matrix file.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Identity,
    RandomProjection,
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorEncoderSpec {
    pub kind: PriorKind,
    pub seed: u64,
    pub path: String,
    pub output_dim: usize,
}

impl PriorEncoderSpec {
    pub fn identity() -> Self {
        PriorEncoderSpec {
            kind: PriorKind::Identity,
            seed: 0,
            path: String::new(),
            output_dim: 0,
        }
    }
}

/// Resolved frozen encoder for a fixed input dimension.
#[derive(Debug, Clone)]
pub struct PriorEncoder {
    kind: PriorKind,
    input_dim: usize,
    output_dim: usize,
    /// `input_dim x output_dim` linear map; `None` for identity.
    matrix: Option<Tensor>,
}

impl PriorEncoder {
    pub fn from_spec(spec: &PriorEncoderSpec, input_dim: usize) -> Result<Self> {
        match spec.kind {
            PriorKind::Identity => {
                if spec.output_dim != 0 && spec.output_dim != input_dim {
                    return Err(Error::InvalidSpec(format!(
                        "identity prior requires output_dim == input dim ({} vs {})",
                        spec.output_dim, input_dim
                    )));
                }
                Ok(PriorEncoder {
                    kind: PriorKind::Identity,
                    input_dim,
                    output_dim: input_dim,
                    matrix: None,
                })
            }
            PriorKind::RandomProjection => {
                if spec.output_dim == 0 {
                    return Err(Error::InvalidSpec(
                        "random_projection prior needs output_dim".into(),
                    ));
                }
                let out = spec.output_dim;
                let scale = 1.0 / (out as f64).sqrt();
                let mut rng = rng_from(&[spec.seed, 0x70726a]);
                let data: Vec<f64> = (0..input_dim * out)
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        g * scale
                    })
                    .collect();
                Ok(PriorEncoder {
                    kind: PriorKind::RandomProjection,
                    input_dim,
                    output_dim: out,
                    matrix: Some(Tensor::matrix(data, input_dim, out)?),
                })
            }
            PriorKind::File => {
                let (rows, cols, data) = crate::data::load_matrix_glf1(&spec.path)?;
                if rows != input_dim {
                    return Err(Error::InvalidSpec(format!(
                        "prior weight file is {rows}x{cols}, input dim is {input_dim}"
                    )));
                }
                if spec.output_dim != 0 && spec.output_dim != cols {
                    return Err(Error::InvalidSpec(format!(
                        "prior weight file is {rows}x{cols}, declared output_dim {}",
                        spec.output_dim
                    )));
                }
                Ok(PriorEncoder {
                    kind: PriorKind::File,
                    input_dim,
                    output_dim: cols,
                    matrix: Some(Tensor::matrix(data, rows, cols)?),
                })
            }
        }
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Frozen forward pass; the result never carries a tape link.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim {
            return Err(Error::Dimension(format!(
                "prior encoder expects m x {} input, got {:?}",
                self.input_dim,
                x.shape()
            )));
        }
        let frozen = x.detach();
        match &self.matrix {
            None => Ok(frozen),
            Some(w) => frozen.matmul(w),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_input_through() {
        let enc = PriorEncoder::from_spec(&PriorEncoderSpec::identity(), 3).unwrap();
        let x = Tensor::matrix(vec![1.0, 2.0, 3.0, -4.0, 0.0, 5.5], 2, 3).unwrap();
        let y = enc.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(!y.is_on_tape());
    }

    #[test]
    fn random_projection_is_seeded() {
        let spec = PriorEncoderSpec {
            kind: PriorKind::RandomProjection,
            seed: 11,
            path: String::new(),
            output_dim: 4,
        };
        let a = PriorEncoder::from_spec(&spec, 6).unwrap();
        let b = PriorEncoder::from_spec(&spec, 6).unwrap();
        let x = Tensor::matrix((0..12).map(|i| i as f64).collect(), 2, 6).unwrap();
        assert_eq!(a.forward(&x).unwrap().data(), b.forward(&x).unwrap().data());
    }

    #[test]
    fn output_is_detached_even_for_tape_input() {
        let tape = crate::autodiff::Tape::new();
        let x = tape.var(&Tensor::matrix(vec![1.0, 2.0], 1, 2).unwrap());
        let enc = PriorEncoder::from_spec(&PriorEncoderSpec::identity(), 2).unwrap();
        let y = enc.forward(&x).unwrap();
        assert!(!y.is_on_tape());
    }

    #[test]
    fn identity_dim_mismatch_rejected() {
        let spec = PriorEncoderSpec {
            kind: PriorKind::Identity,
            seed: 0,
            path: String::new(),
            output_dim: 5,
        };
        assert!(PriorEncoder::from_spec(&spec, 3).is_err());
    }
}
