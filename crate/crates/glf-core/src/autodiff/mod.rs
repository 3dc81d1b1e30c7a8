//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records tensor operations during the forward pass; calling
//! [`Tape::backward`] on a scalar loss replays the recorded nodes in reverse
//! and accumulates adjoints into every tape-linked leaf. Tapes are explicit
//! and single-use: the training loop rebuilds one per step.
//!
//! Stop-gradient is [`Tensor::detach`]: the forward value is shared bitwise,
//! the backward contribution is exactly zero because the detached tensor
//! carries no tape link.

mod ops;

pub mod gradcheck;

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major f64 tensor, optionally linked to a gradient tape.
///
/// Tensors without a tape link are plain immutable values. Every forward
/// operation validates that its output is finite; NaN/Inf is an error, not a
/// propagating state.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    node: Option<NodeRef>,
}

#[derive(Clone)]
struct NodeRef {
    tape: Rc<RefCell<TapeInner>>,
    id: usize,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("on_tape", &self.node.is_some())
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    /// Builds a constant (tape-free) tensor. Errors if the element count does
    /// not match the shape or any entry is non-finite.
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape {
                op: "Tensor::new",
                shape,
                reason: "element count does not match shape product",
            });
        }
        let t = Tensor {
            shape,
            data: Arc::new(data),
            node: None,
        };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    pub fn scalar_value(v: f64) -> Result<Self> {
        Tensor::new(vec![v], vec![1])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![0.0; numel]),
            node: None,
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![1.0; numel]),
            node: None,
        }
    }

    /// 2-D constructor from row-major data.
    pub fn matrix(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        Tensor::new(data, vec![rows, cols])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_on_tape(&self) -> bool {
        self.node.is_some()
    }

    /// Number of rows for 1-D/2-D tensors.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of columns; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    /// Extracts the single element of a scalar tensor.
    pub fn scalar(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::InvalidShape {
                op: "Tensor::scalar",
                shape: self.shape.clone(),
                reason: "expected exactly one element",
            });
        }
        Ok(self.data[0])
    }

    /// Stop-gradient: forward value shared bitwise, no tape linkage.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    fn node_id_on(&self, tape: &Rc<RefCell<TapeInner>>) -> Result<Option<usize>> {
        match &self.node {
            None => Ok(None),
            Some(nr) => {
                if Rc::ptr_eq(&nr.tape, tape) {
                    Ok(Some(nr.id))
                } else {
                    Err(Error::TapeMismatch)
                }
            }
        }
    }
}

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    parents: Vec<usize>,
    /// Maps the upstream adjoint to one gradient tensor per parent.
    backward: BackwardFn,
}

struct TapeInner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Append-only record of one forward pass. Single-threaded, single-use.
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    /// Registers a leaf variable. The returned tensor shares the input's data
    /// and participates in gradient computation.
    pub fn var(&self, value: &Tensor) -> Tensor {
        let id = {
            let mut inner = self.inner.borrow_mut();
            let id = inner.nodes.len();
            inner.nodes.push(Node {
                parents: Vec::new(),
                backward: Box::new(|_| Vec::new()),
            });
            id
        };
        Tensor {
            shape: value.shape.clone(),
            data: Arc::clone(&value.data),
            node: Some(NodeRef {
                tape: Rc::clone(&self.inner),
                id,
            }),
        }
    }

    /// Reverse pass from a scalar loss. Consumes the tape; a second call is
    /// an error. Leaves that do not participate in the loss receive zero.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: loss.shape.clone(),
            });
        }
        let loss_id = match &loss.node {
            Some(nr) if Rc::ptr_eq(&nr.tape, &self.inner) => nr.id,
            Some(_) => return Err(Error::TapeMismatch),
            None => return Err(Error::NotOnTape),
        };
        {
            let mut inner = self.inner.borrow_mut();
            if inner.consumed {
                return Err(Error::TapeConsumed);
            }
            inner.consumed = true;
        }

        let inner = self.inner.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; inner.nodes.len()];
        grads[loss_id] = Some(Tensor::ones(loss.shape.clone()));

        for id in (0..=loss_id).rev() {
            let upstream = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &inner.nodes[id];
            if node.parents.is_empty() {
                grads[id] = Some(upstream);
                continue;
            }
            let contributions = (node.backward)(&upstream);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (&pid, contrib) in node.parents.iter().zip(contributions) {
                contrib.check_finite("backward")?;
                grads[pid] = Some(match grads[pid].take() {
                    None => contrib,
                    Some(acc) => accumulate(&acc, &contrib),
                });
            }
            // Interior adjoints are dropped once propagated; only leaves keep theirs.
        }

        Ok(Gradients { grads })
    }
}

fn accumulate(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.shape, b.shape);
    let data: Vec<f64> = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| x + y)
        .collect();
    Tensor {
        shape: a.shape.clone(),
        data: Arc::new(data),
        node: None,
    }
}

/// Result of a backward pass: one gradient per tape node, retained for leaves.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a tape-linked tensor. Leaves that
    /// did not participate receive a zero tensor of the leaf's shape.
    pub fn wrt(&self, leaf: &Tensor) -> Result<Tensor> {
        let nr = leaf.node.as_ref().ok_or(Error::NotOnTape)?;
        match self.grads.get(nr.id) {
            Some(Some(g)) => Ok(g.clone()),
            _ => Ok(Tensor::zeros(leaf.shape.clone())),
        }
    }
}

/// Shared helper for ops: resolves the tape both operands agree on (if any).
fn common_tape(ts: &[&Tensor]) -> Result<Option<Rc<RefCell<TapeInner>>>> {
    let mut found: Option<Rc<RefCell<TapeInner>>> = None;
    for t in ts {
        if let Some(nr) = &t.node {
            match &found {
                None => found = Some(Rc::clone(&nr.tape)),
                Some(existing) => {
                    if !Rc::ptr_eq(existing, &nr.tape) {
                        return Err(Error::TapeMismatch);
                    }
                }
            }
        }
    }
    Ok(found)
}

/// Records a node on `tape` and returns the tape-linked output tensor.
fn record(
    tape: Rc<RefCell<TapeInner>>,
    parents: Vec<usize>,
    backward: BackwardFn,
    out_shape: Vec<usize>,
    out_data: Vec<f64>,
) -> Tensor {
    let id = {
        let mut inner = tape.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { parents, backward });
        id
    };
    Tensor {
        shape: out_shape,
        data: Arc::new(out_data),
        node: Some(NodeRef { tape, id }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detach_is_bitwise_identity() {
        let t = Tensor::new(vec![1.5, -2.25, 0.0], vec![3]).unwrap();
        let d = t.detach();
        assert_eq!(t.data(), d.data());
        assert!(!d.is_on_tape());
    }

    #[test]
    fn non_finite_constructor_rejected() {
        assert!(Tensor::new(vec![f64::NAN], vec![1]).is_err());
        assert!(Tensor::new(vec![f64::INFINITY], vec![1]).is_err());
    }

    #[test]
    fn backward_twice_is_an_error() {
        let tape = Tape::new();
        let x = tape.var(&Tensor::scalar_value(2.0).unwrap());
        let y = x.mul(&x).unwrap();
        tape.backward(&y).unwrap();
        let y2 = x.mul(&x).unwrap();
        assert!(matches!(tape.backward(&y2), Err(Error::TapeConsumed)));
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.var(&Tensor::new(vec![1.0, 2.0], vec![2]).unwrap());
        assert!(matches!(
            tape.backward(&x),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let tape = Tape::new();
        let x = tape.var(&Tensor::new(vec![1.0, 2.0, 3.0], vec![3]).unwrap());
        // Loss never touches x.
        let c = tape.var(&Tensor::scalar_value(7.0).unwrap());
        let loss = c.mul_scalar(1.0).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_loss_gradient_equals_weights() {
        let tape = Tape::new();
        let w = Tensor::new(vec![2.0, -1.0, 0.5], vec![3]).unwrap();
        let x = tape.var(&Tensor::new(vec![1.0, 1.0, 1.0], vec![3]).unwrap());
        let loss = x.mul(&w).unwrap().sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), w.data());
    }

    #[test]
    fn tapes_do_not_mix() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.var(&Tensor::scalar_value(1.0).unwrap());
        let b = t2.var(&Tensor::scalar_value(2.0).unwrap());
        assert!(matches!(a.mul(&b), Err(Error::TapeMismatch)));
    }
}
