//! Finite-difference oracle for gradients.

use super::{Tape, Tensor};
use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar function against central finite
/// differences at `x`, returning `max_i |analytic_i - central_i| / max(1, |central_i|)`.
///
/// The same closure produces both routes: evaluated on a tape-linked tensor
/// for the analytic gradient and on plain tensors for the difference quotients,
/// so quantities the function freezes (stop-gradient captures) stay frozen in
/// both.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if h <= 0.0 {
        return Err(Error::Domain {
            op: "finite_difference_check",
            reason: "step must be positive".into(),
        });
    }
    let tape = Tape::new();
    let xv = tape.var(x);
    let loss = f(&xv)?;
    if loss.numel() != 1 {
        return Err(Error::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }
    let analytic = tape.backward(&loss)?.wrt(&xv)?;

    let mut max_rel = 0.0f64;
    let base = x.data().to_vec();
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = f(&Tensor::new(plus, x.shape().to_vec())?)?.scalar()?;
        let fm = f(&Tensor::new(minus, x.shape().to_vec())?)?.scalar()?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_difference_check",
            });
        }
        let central = (fp - fm) / (2.0 * h);
        let rel = (analytic.data()[i] - central).abs() / central.abs().max(1.0);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
