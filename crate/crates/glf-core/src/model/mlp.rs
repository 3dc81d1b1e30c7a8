//! MLP encoder / projection head / predictor.

use rand::Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalActivation {
    None,
    L2Normalize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// input -> hidden... -> output widths.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub final_activation: FinalActivation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, final_activation: FinalActivation) -> Self {
        MlpSpec {
            layer_widths,
            activation,
            final_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(
                "mlp needs at least input and output widths".into(),
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidSpec("mlp widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Owned parameter set: one (weight, bias) pair per layer, weights stored
/// `fan_in x fan_out` row-major.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<(Tensor, Tensor)>,
}

/// Tape-linked view of the parameters for one training step.
pub struct MlpVars {
    spec: MlpSpec,
    pub layers: Vec<(Tensor, Tensor)>,
}

/// Xavier-uniform initialization: weights from `U(±sqrt(6/(fan_in+fan_out)))`,
/// biases zero. Deterministic per seed.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> Result<MlpParams> {
    spec.validate()?;
    let mut rng = rng_from(&[seed]);
    let mut layers = Vec::new();
    for w in spec.layer_widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let weight = Tensor::matrix(data, fan_in, fan_out)?;
        let bias = Tensor::zeros(vec![fan_out]);
        layers.push((weight, bias));
    }
    Ok(MlpParams {
        spec: spec.clone(),
        layers,
    })
}

fn forward_layers(
    spec: &MlpSpec,
    layers: &[(Tensor, Tensor)],
    x: &Tensor,
) -> Result<Tensor> {
    if x.shape().len() != 2 || x.shape()[1] != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "mlp expects m x {} input, got {:?}",
            spec.input_dim(),
            x.shape()
        )));
    }
    let mut h = x.clone();
    let last = layers.len() - 1;
    for (i, (w, b)) in layers.iter().enumerate() {
        h = h.matmul(w)?.add_rowvec(b)?;
        if i < last {
            h = match spec.activation {
                Activation::Relu => h.relu()?,
                Activation::Tanh => h.tanh()?,
            };
        }
    }
    match spec.final_activation {
        FinalActivation::None => Ok(h),
        FinalActivation::L2Normalize => h.normalize_rows(),
    }
}

impl MlpParams {
    /// Registers every parameter on the tape for one training step.
    pub fn watch(&self, tape: &Tape) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|(w, b)| (tape.var(w), tape.var(b)))
            .collect();
        MlpVars {
            spec: self.spec.clone(),
            layers,
        }
    }

    /// Forward pass on plain values (evaluation path, no gradients).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        forward_layers(&self.spec, &self.layers, &x.detach())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|(w, b)| w.numel() + b.numel())
            .sum()
    }

    /// Flat views used by the optimizer and checkpointing, named
    /// `{prefix}.w{i}` / `{prefix}.b{i}`.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.w{i}"), w.clone()));
            out.push((format!("{prefix}.b{i}"), b.clone()));
        }
        out
    }

    /// Replaces parameters from a flat tensor list in `named_tensors` order.
    pub fn set_from_flat(&mut self, tensors: &[Tensor]) -> Result<()> {
        if tensors.len() != self.layers.len() * 2 {
            return Err(Error::Dimension(format!(
                "expected {} tensors, got {}",
                self.layers.len() * 2,
                tensors.len()
            )));
        }
        for (i, pair) in tensors.chunks(2).enumerate() {
            if pair[0].shape() != self.layers[i].0.shape()
                || pair[1].shape() != self.layers[i].1.shape()
            {
                return Err(Error::Dimension(format!("shape mismatch at layer {i}")));
            }
            self.layers[i] = (pair[0].detach(), pair[1].detach());
        }
        Ok(())
    }
}

impl MlpVars {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        forward_layers(&self.spec, &self.layers, x)
    }

    /// Parameter tensors in the same order as [`MlpParams::named_tensors`].
    pub fn flat(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(widths: &[usize]) -> MlpSpec {
        MlpSpec::new(widths.to_vec(), Activation::Relu, FinalActivation::None)
    }

    #[test]
    fn deterministic_init() {
        let s = spec(&[4, 8, 2]);
        let a = init_mlp(&s, 7).unwrap();
        let b = init_mlp(&s, 7).unwrap();
        for ((wa, ba), (wb, bb)) in a.layers.iter().zip(&b.layers) {
            assert_eq!(wa.data(), wb.data());
            assert_eq!(ba.data(), bb.data());
        }
        let c = init_mlp(&s, 8).unwrap();
        assert_ne!(a.layers[0].0.data(), c.layers[0].0.data());
    }

    #[test]
    fn parameter_count_4_8_2() {
        let p = init_mlp(&spec(&[4, 8, 2]), 0).unwrap();
        assert_eq!(p.parameter_count(), 58);
        assert_eq!(p.spec.parameter_count(), 58);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = init_mlp(&spec(&[3, 5, 2]), 1).unwrap();
        for (_, b) in &p.layers {
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut p = init_mlp(&spec(&[3, 4, 2]), 0).unwrap();
        let zeroed: Vec<Tensor> = p
            .named_tensors("m")
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        p.set_from_flat(&zeroed).unwrap();
        let x = Tensor::matrix(vec![1.0, -2.0, 3.0], 1, 3).unwrap();
        let y = p.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_normalize_output_rows() {
        let s = MlpSpec::new(vec![2, 2], Activation::Relu, FinalActivation::L2Normalize);
        let mut p = init_mlp(&s, 0).unwrap();
        // Identity weights, zero bias.
        p.set_from_flat(&[
            Tensor::matrix(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap(),
            Tensor::zeros(vec![2]),
        ])
        .unwrap();
        let x = Tensor::matrix(vec![3.0, 4.0], 1, 2).unwrap();
        let y = p.forward(&x).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-10);
        assert!((y.data()[1] - 0.8).abs() < 1e-10);
        let norm: f64 = y.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn relu_blocks_negative_hidden_units() {
        let s = spec(&[1, 1, 1]);
        let mut p = init_mlp(&s, 0).unwrap();
        p.set_from_flat(&[
            Tensor::matrix(vec![1.0], 1, 1).unwrap(),
            Tensor::zeros(vec![1]),
            Tensor::matrix(vec![1.0], 1, 1).unwrap(),
            Tensor::zeros(vec![1]),
        ])
        .unwrap();
        let y = p
            .forward(&Tensor::matrix(vec![-1.0], 1, 1).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(init_mlp(&spec(&[4]), 0).is_err());
        assert!(init_mlp(&spec(&[4, 0, 2]), 0).is_err());
    }
}
