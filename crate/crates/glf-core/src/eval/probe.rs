//! Linear probe: multinomial logistic regression on frozen features.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{CosineSchedule, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Reserved for stochastic probe variants; the full-batch probe is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 100,
            momentum: 0.9,
            weight_decay: 5e-6,
            lr_initial: 1e-2,
            lr_final: 1e-6,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_initial < self.lr_final || self.lr_final <= 0.0 {
            return Err(Error::InvalidSpec(
                "probe learning rates must satisfy lr_initial >= lr_final > 0".into(),
            ));
        }
        Ok(())
    }
}

fn class_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Argmax with ties broken toward the lowest index.
pub(crate) fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains a zero-initialized softmax classifier with full-batch SGD under the
/// cosine schedule and returns top-1 test accuracy. Features must be frozen
/// (tape-detached).
pub fn linear_probe(
    train_feats: &Tensor,
    train_labels: &[usize],
    test_feats: &Tensor,
    test_labels: &[usize],
    cfg: &ProbeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let n = train_feats.rows();
    let d = train_feats.cols();
    if n != train_labels.len() || test_feats.rows() != test_labels.len() {
        return Err(Error::Dimension("features do not align with labels".into()));
    }
    if test_feats.cols() != d {
        return Err(Error::Dimension(
            "train and test feature dimensions differ".into(),
        ));
    }
    let k = class_count(train_labels).max(class_count(test_labels));
    let distinct = {
        let mut seen = vec![false; k];
        for &l in train_labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::Degenerate(
            "linear probe needs at least two classes in the training set".into(),
        ));
    }

    let train = train_feats.detach();
    let mut weights = Tensor::zeros(vec![d, k]);
    let mut bias = Tensor::zeros(vec![k]);
    let schedule = CosineSchedule::new(cfg.lr_initial, cfg.lr_final, cfg.epochs)?;
    let mut opt = OptimizerState::new(
        schedule,
        cfg.momentum,
        cfg.weight_decay,
        &[weights.clone(), bias.clone()],
    )?;

    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let w = tape.var(&weights);
        let b = tape.var(&bias);
        let logits = train.matmul(&w)?.add_rowvec(&b)?;
        let log_probs = logits.log_softmax_rows()?;
        let picked = log_probs.select_per_row(train_labels)?;
        let loss = picked.mean()?.neg()?;
        let grads = tape.backward(&loss)?;
        let gw = grads.wrt(&w)?;
        let gb = grads.wrt(&b)?;
        let mut params = [weights, bias];
        opt.sgd_step(&mut params, &[gw, gb])?;
        [weights, bias] = params;
    }

    // Evaluation.
    let logits = test_feats.detach().matmul(&weights)?.add_rowvec(&bias)?;
    let mut correct = 0usize;
    for (i, &label) in test_labels.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        if argmax_lowest(row) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_labels.len() as f64)
}
