//! SGD with momentum, weight decay, and a cosine learning-rate schedule.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn new(lr_initial: f64, lr_final: f64, total_steps: usize) -> Result<Self> {
        if lr_initial <= 0.0 || lr_final <= 0.0 {
            return Err(Error::InvalidSpec(
                "learning rates must stay positive throughout the schedule".into(),
            ));
        }
        Ok(CosineSchedule {
            lr_initial,
            lr_final,
            total_steps,
        })
    }

    /// Cosine decay hitting `lr_initial` at step 0 and `lr_final` at the last
    /// step of the schedule.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.total_steps <= 1 {
            return self.lr_initial;
        }
        let t = step.min(self.total_steps - 1) as f64;
        let span = (self.total_steps - 1) as f64;
        let cosine = (std::f64::consts::PI * t / span).cos();
        self.lr_final + 0.5 * (self.lr_initial - self.lr_final) * (1.0 + cosine)
    }
}

/// Velocity state and hyperparameters for one parameter set.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub schedule: CosineSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
    step: usize,
}

impl OptimizerState {
    pub fn new(
        schedule: CosineSchedule,
        momentum: f64,
        weight_decay: f64,
        params: &[Tensor],
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidSpec(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if weight_decay < 0.0 {
            return Err(Error::InvalidSpec(
                "weight decay must be non-negative".into(),
            ));
        }
        Ok(OptimizerState {
            schedule,
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr_at(self.step)
    }

    /// `v <- momentum·v + grad + weight_decay·param; param <- param - lr·v`.
    pub fn sgd_step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds {} buffers, got {} params / {} grads",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        let lr = self.schedule.lr_at(self.step);
        for ((param, grad), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if param.shape() != grad.shape() {
                return Err(Error::ShapeMismatch {
                    op: "sgd_step",
                    lhs: param.shape().to_vec(),
                    rhs: grad.shape().to_vec(),
                });
            }
            let mut next = Vec::with_capacity(param.numel());
            for ((&p, &g), v) in param.data().iter().zip(grad.data()).zip(vel.iter_mut()) {
                *v = self.momentum * *v + g + self.weight_decay * p;
                next.push(p - lr * *v);
            }
            *param = Tensor::new(next, param.shape().to_vec())?;
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_step_moves_against_gradient() {
        let sched = CosineSchedule::new(0.1, 0.1, 10).unwrap();
        let mut opt =
            OptimizerState::new(sched, 0.0, 0.0, &[Tensor::scalar_value(1.0).unwrap()]).unwrap();
        let mut params = vec![Tensor::scalar_value(1.0).unwrap()];
        opt.sgd_step(&mut params, &[Tensor::scalar_value(1.0).unwrap()])
            .unwrap();
        assert!((params[0].scalar().unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn cosine_endpoints() {
        let sched = CosineSchedule::new(1e-2, 1e-6, 500).unwrap();
        assert!((sched.lr_at(0) - 1e-2).abs() < 1e-12);
        assert!((sched.lr_at(499) - 1e-6).abs() < 1e-12);
        // Past the schedule the rate stays at the final value.
        assert!((sched.lr_at(1000) - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn momentum_unrolls_as_expected() {
        // Two steps, constant grad g, momentum 0.9, no decay:
        // displacement = lr·g·(1 + 1.9).
        let lr = 0.01;
        let g = 2.0;
        let sched = CosineSchedule::new(lr, lr, 100).unwrap();
        let mut opt =
            OptimizerState::new(sched, 0.9, 0.0, &[Tensor::scalar_value(0.0).unwrap()]).unwrap();
        let mut params = vec![Tensor::scalar_value(0.0).unwrap()];
        for _ in 0..2 {
            opt.sgd_step(&mut params, &[Tensor::scalar_value(g).unwrap()])
                .unwrap();
        }
        let expect = -lr * g * (1.0 + 1.9);
        assert!((params[0].scalar().unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let sched = CosineSchedule::new(0.1, 0.1, 1).unwrap();
        assert!(OptimizerState::new(sched, 1.0, 0.0, &[]).is_err());
        assert!(OptimizerState::new(sched, 0.5, -0.1, &[]).is_err());
        assert!(CosineSchedule::new(0.0, 0.1, 1).is_err());
    }
}
