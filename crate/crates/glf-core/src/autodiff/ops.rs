//! Tensor operations and their adjoint rules.
//!
//! Elementwise binaries support exact-shape and scalar broadcast only.
//! Broadcasts of vectors against matrices go through the dedicated
//! `*_rowvec` / `*_colvec` primitives so every adjoint stays explicit.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use super::{common_tape, record, BackwardFn, Tensor};
use crate::error::{Error, Result};

impl Tensor {
    // ── elementwise binaries ────────────────────────────────────────────

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(
            self,
            other,
            "div",
            |a, b| a / b,
            |_, b| 1.0 / b,
            |a, b| -a / (b * b),
        )
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        unary(self, "add_scalar", move |x| x + s, move |x, _| {
            let _ = x;
            1.0
        })
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Tensor> {
        unary(self, "mul_scalar", move |x| x * s, move |_, _| s)
    }

    // ── elementwise unaries ─────────────────────────────────────────────

    pub fn neg(&self) -> Result<Tensor> {
        unary(self, "neg", |x| -x, |_, _| -1.0)
    }

    pub fn exp(&self) -> Result<Tensor> {
        unary(self, "exp", |x| x.exp(), |_, y| y)
    }

    /// Natural log; operands must be strictly positive.
    pub fn ln(&self) -> Result<Tensor> {
        if self.data.iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "ln",
                reason: "operand has non-positive entries".into(),
            });
        }
        unary(self, "ln", |x| x.ln(), |x, _| 1.0 / x)
    }

    /// Square root; operands must be non-negative (strictly positive when a
    /// gradient through the value is required).
    pub fn sqrt(&self) -> Result<Tensor> {
        if self.data.iter().any(|&x| x < 0.0) {
            return Err(Error::Domain {
                op: "sqrt",
                reason: "operand has negative entries".into(),
            });
        }
        unary(self, "sqrt", |x| x.sqrt(), |_, y| 0.5 / y)
    }

    /// Elementwise power with a constant exponent. Non-integer exponents
    /// require strictly positive operands.
    pub fn powf(&self, c: f64) -> Result<Tensor> {
        if c.fract() != 0.0 && self.data.iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "powf",
                reason: "non-integer exponent on non-positive entries".into(),
            });
        }
        unary(
            self,
            "powf",
            move |x| x.powf(c),
            move |x, _| c * x.powf(c - 1.0),
        )
    }

    pub fn relu(&self) -> Result<Tensor> {
        unary(
            self,
            "relu",
            |x| if x > 0.0 { x } else { 0.0 },
            |x, _| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn tanh(&self) -> Result<Tensor> {
        unary(self, "tanh", |x| x.tanh(), |_, y| 1.0 - y * y)
    }

    /// Elementwise max with a constant floor; gradient is blocked on clamped
    /// entries.
    pub fn clamp_min(&self, floor: f64) -> Result<Tensor> {
        unary(
            self,
            "clamp_min",
            move |x| x.max(floor),
            move |x, _| if x > floor { 1.0 } else { 0.0 },
        )
    }

    // ── reductions ──────────────────────────────────────────────────────

    pub fn sum(&self) -> Result<Tensor> {
        let total: f64 = self.data.iter().sum();
        let shape = self.shape.clone();
        let tape = common_tape(&[self])?;
        finalize(
            "sum",
            tape,
            self,
            move |up: &Tensor| {
                let u = up.data[0];
                Tensor {
                    shape: shape.clone(),
                    data: Arc::new(vec![u; shape.iter().product()]),
                    node: None,
                }
            },
            vec![1],
            vec![total],
        )
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::InvalidShape {
                op: "mean",
                shape: self.shape.clone(),
                reason: "empty tensor",
            });
        }
        let total: f64 = self.data.iter().sum();
        let shape = self.shape.clone();
        let tape = common_tape(&[self])?;
        finalize(
            "mean",
            tape,
            self,
            move |up: &Tensor| {
                let u = up.data[0] / n as f64;
                Tensor {
                    shape: shape.clone(),
                    data: Arc::new(vec![u; n]),
                    node: None,
                }
            },
            vec![1],
            vec![total / n as f64],
        )
    }

    /// Per-row sum of a 2-D tensor: `[m, n] -> [m]`.
    pub fn row_sum(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("row_sum")?;
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = self.data[i * n..(i + 1) * n].iter().sum();
        }
        let tape = common_tape(&[self])?;
        finalize(
            "row_sum",
            tape,
            self,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                for i in 0..m {
                    let u = up.data[i];
                    for v in &mut g[i * n..(i + 1) * n] {
                        *v = u;
                    }
                }
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m],
            out,
        )
    }

    /// Max-shifted log-sum-exp over every element, yielding a scalar.
    pub fn log_sum_exp(&self) -> Result<Tensor> {
        if self.numel() == 0 {
            return Err(Error::InvalidShape {
                op: "log_sum_exp",
                shape: self.shape.clone(),
                reason: "empty tensor",
            });
        }
        let max = self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self.data.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        let data = Arc::clone(&self.data);
        let shape = self.shape.clone();
        let tape = common_tape(&[self])?;
        finalize(
            "log_sum_exp",
            tape,
            self,
            move |up: &Tensor| {
                let u = up.data[0];
                let g: Vec<f64> = data.iter().map(|&x| u * (x - lse).exp()).collect();
                Tensor {
                    shape: shape.clone(),
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![1],
            vec![lse],
        )
    }

    /// Per-row max-shifted log-sum-exp: `[m, n] -> [m]`.
    pub fn log_sum_exp_rows(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("log_sum_exp_rows")?;
        if n == 0 {
            return Err(Error::InvalidShape {
                op: "log_sum_exp_rows",
                shape: self.shape.clone(),
                reason: "empty rows",
            });
        }
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
            out[i] = max + sum.ln();
        }
        let data = Arc::clone(&self.data);
        let lse = out.clone();
        let tape = common_tape(&[self])?;
        finalize(
            "log_sum_exp_rows",
            tape,
            self,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                for i in 0..m {
                    let u = up.data[i];
                    for j in 0..n {
                        g[i * n + j] = u * (data[i * n + j] - lse[i]).exp();
                    }
                }
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m],
            out,
        )
    }

    // ── linear algebra and layout ───────────────────────────────────────

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let out = matmul_kernel(&self.data, m, k, &other.data, n);
        let a = Arc::clone(&self.data);
        let b = Arc::clone(&other.data);
        let tape = common_tape(&[self, other])?;
        finalize_binary(
            "matmul",
            tape,
            self,
            other,
            move |up: &Tensor| {
                let g = matmul_nt(&up.data, m, n, &b, k);
                Tensor {
                    shape: vec![m, k],
                    data: Arc::new(g),
                    node: None,
                }
            },
            move |up: &Tensor| {
                let g = matmul_tn(&a, m, k, &up.data, n);
                Tensor {
                    shape: vec![k, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m, n],
            out,
        )
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        let tape = common_tape(&[self])?;
        finalize(
            "transpose",
            tape,
            self,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        g[i * n + j] = up.data[j * m + i];
                    }
                }
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![n, m],
            out,
        )
    }

    /// Stacks 2-D tensors with equal column counts along the row axis.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidShape {
                op: "concat_rows",
                shape: vec![],
                reason: "no tensors to concatenate",
            });
        }
        let (_, n) = parts[0].dims2("concat_rows")?;
        let mut rows = 0usize;
        let mut data = Vec::new();
        let mut row_offsets = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = p.dims2("concat_rows")?;
            if pn != n {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            row_offsets.push(rows);
            rows += pm;
            data.extend_from_slice(&p.data);
        }
        let tape = common_tape(parts)?;
        let out = Tensor {
            shape: vec![rows, n],
            data: Arc::new(data),
            node: None,
        };
        out.check_finite("concat_rows")?;
        let tape = match tape {
            None => return Ok(out),
            Some(t) => t,
        };
        // Parents: only the tape-linked parts, in order.
        let mut parents = Vec::new();
        let mut linked = Vec::new(); // (row offset, m, flag index into parents)
        for (idx, p) in parts.iter().enumerate() {
            if let Some(id) = p.node_id_on(&tape)? {
                parents.push(id);
                linked.push((row_offsets[idx], p.rows()));
            }
        }
        let backward: BackwardFn = Box::new(move |up: &Tensor| {
            linked
                .iter()
                .map(|&(off, m)| {
                    let g = up.data[off * n..(off + m) * n].to_vec();
                    Tensor {
                        shape: vec![m, n],
                        data: Arc::new(g),
                        node: None,
                    }
                })
                .collect()
        });
        Ok(record(
            tape,
            parents,
            backward,
            out.shape.clone(),
            Arc::try_unwrap(out.data).unwrap_or_else(|a| (*a).clone()),
        ))
    }

    /// Rows `r0..r1` of a 2-D tensor.
    pub fn slice_rows(&self, r0: usize, r1: usize) -> Result<Tensor> {
        let (m, n) = self.dims2("slice_rows")?;
        if r0 > r1 || r1 > m {
            return Err(Error::InvalidShape {
                op: "slice_rows",
                shape: self.shape.clone(),
                reason: "row range out of bounds",
            });
        }
        let out = self.data[r0 * n..r1 * n].to_vec();
        let rows = r1 - r0;
        let tape = common_tape(&[self])?;
        finalize(
            "slice_rows",
            tape,
            self,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                g[r0 * n..r1 * n].copy_from_slice(&up.data);
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![rows, n],
            out,
        )
    }

    /// Diagonal of a square matrix as a vector.
    pub fn diag(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("diag")?;
        if m != n {
            return Err(Error::InvalidShape {
                op: "diag",
                shape: self.shape.clone(),
                reason: "matrix is not square",
            });
        }
        let out: Vec<f64> = (0..m).map(|i| self.data[i * n + i]).collect();
        let tape = common_tape(&[self])?;
        finalize(
            "diag",
            tape,
            self,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                for i in 0..m {
                    g[i * n + i] = up.data[i];
                }
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m],
            out,
        )
    }

    /// Picks one element per row: `out[i] = a[i, idx[i]]`.
    pub fn select_per_row(&self, idx: &[usize]) -> Result<Tensor> {
        let (m, n) = self.dims2("select_per_row")?;
        if idx.len() != m || idx.iter().any(|&j| j >= n) {
            return Err(Error::InvalidShape {
                op: "select_per_row",
                shape: self.shape.clone(),
                reason: "index vector mismatched or out of bounds",
            });
        }
        let out: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| self.data[i * n + j]).collect();
        let idx = idx.to_vec();
        let tape = common_tape(&[self])?;
        finalize(
            "select_per_row",
            tape,
            self,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                for (i, &j) in idx.iter().enumerate() {
                    g[i * n + j] = up.data[i];
                }
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m],
            out,
        )
    }

    /// Replaces masked entries with a constant; gradient is blocked there.
    pub fn masked_fill(&self, mask: &[bool], value: f64) -> Result<Tensor> {
        if mask.len() != self.numel() {
            return Err(Error::InvalidShape {
                op: "masked_fill",
                shape: self.shape.clone(),
                reason: "mask length mismatch",
            });
        }
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| if m { value } else { x })
            .collect();
        let mask = mask.to_vec();
        let shape = self.shape.clone();
        let tape = common_tape(&[self])?;
        finalize(
            "masked_fill",
            tape,
            self,
            move |up: &Tensor| {
                let g: Vec<f64> = up
                    .data
                    .iter()
                    .zip(mask.iter())
                    .map(|(&u, &m)| if m { 0.0 } else { u })
                    .collect();
                Tensor {
                    shape: shape.clone(),
                    data: Arc::new(g),
                    node: None,
                }
            },
            self.shape.clone(),
            out,
        )
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` tensor.
    pub fn add_rowvec(&self, v: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2("add_rowvec")?;
        if v.numel() != n {
            return Err(Error::ShapeMismatch {
                op: "add_rowvec",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.data[i * n + j] + v.data[j];
            }
        }
        let tape = common_tape(&[self, v])?;
        finalize_binary(
            "add_rowvec",
            tape,
            self,
            v,
            move |up: &Tensor| Tensor {
                shape: vec![m, n],
                data: Arc::new(up.data.to_vec()),
                node: None,
            },
            move |up: &Tensor| {
                let mut g = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        g[j] += up.data[i * n + j];
                    }
                }
                Tensor {
                    shape: vec![n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m, n],
            out,
        )
    }

    /// Adds a length-`m` vector down the rows: `out[i][j] = a[i][j] + v[i]`.
    pub fn add_colvec(&self, v: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2("add_colvec")?;
        if v.numel() != m {
            return Err(Error::ShapeMismatch {
                op: "add_colvec",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.data[i * n + j] + v.data[i];
            }
        }
        let tape = common_tape(&[self, v])?;
        finalize_binary(
            "add_colvec",
            tape,
            self,
            v,
            move |up: &Tensor| Tensor {
                shape: vec![m, n],
                data: Arc::new(up.data.to_vec()),
                node: None,
            },
            move |up: &Tensor| {
                let mut g = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        g[i] += up.data[i * n + j];
                    }
                }
                Tensor {
                    shape: vec![m],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m, n],
            out,
        )
    }

    /// Scales each row by a per-row factor: `out[i][j] = a[i][j] * v[i]`.
    pub fn mul_colvec(&self, v: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2("mul_colvec")?;
        if v.numel() != m {
            return Err(Error::ShapeMismatch {
                op: "mul_colvec",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.data[i * n + j] * v.data[i];
            }
        }
        let a = Arc::clone(&self.data);
        let vv = Arc::clone(&v.data);
        let tape = common_tape(&[self, v])?;
        finalize_binary(
            "mul_colvec",
            tape,
            self,
            v,
            move |up: &Tensor| {
                let mut g = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] = up.data[i * n + j] * vv[i];
                    }
                }
                Tensor {
                    shape: vec![m, n],
                    data: Arc::new(g),
                    node: None,
                }
            },
            move |up: &Tensor| {
                let mut g = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        g[i] += up.data[i * n + j] * a[i * n + j];
                    }
                }
                Tensor {
                    shape: vec![m],
                    data: Arc::new(g),
                    node: None,
                }
            },
            vec![m, n],
            out,
        )
    }

    // ── composites ──────────────────────────────────────────────────────

    /// Unit-normalizes every row. Errors on zero-norm rows.
    pub fn normalize_rows(&self) -> Result<Tensor> {
        let (_, n) = self.dims2("normalize_rows")?;
        let sq = self.mul(self)?.row_sum()?;
        if sq.data.iter().any(|&s| s <= 0.0) {
            return Err(Error::Domain {
                op: "normalize_rows",
                reason: "zero-norm row".into(),
            });
        }
        let inv = sq.powf(-0.5)?;
        let _ = n;
        self.mul_colvec(&inv)
    }

    /// Per-row log-softmax: `x - lse_rows(x)` broadcast down the rows.
    pub fn log_softmax_rows(&self) -> Result<Tensor> {
        let lse = self.log_sum_exp_rows()?;
        self.add_colvec(&lse.neg()?)
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.len() {
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Error::InvalidShape {
                op,
                shape: self.shape.clone(),
                reason: "expected a 2-D tensor",
            }),
        }
    }
}

// ── op assembly helpers ─────────────────────────────────────────────────

type TapeRc = Rc<RefCell<super::TapeInner>>;

fn finalize<F>(
    op: &'static str,
    tape: Option<TapeRc>,
    input: &Tensor,
    grad: F,
    out_shape: Vec<usize>,
    out_data: Vec<f64>,
) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Tensor + 'static,
{
    let out = Tensor {
        shape: out_shape.clone(),
        data: Arc::new(out_data),
        node: None,
    };
    out.check_finite(op)?;
    let tape = match tape {
        None => return Ok(out),
        Some(t) => t,
    };
    let pid = input
        .node_id_on(&tape)?
        .expect("common_tape returned this tape, so the input is linked");
    let backward: BackwardFn = Box::new(move |up| vec![grad(up)]);
    Ok(record(
        tape,
        vec![pid],
        backward,
        out_shape,
        Arc::try_unwrap(out.data).unwrap_or_else(|a| (*a).clone()),
    ))
}

#[allow(clippy::too_many_arguments)]
fn finalize_binary<FA, FB>(
    op: &'static str,
    tape: Option<TapeRc>,
    a: &Tensor,
    b: &Tensor,
    grad_a: FA,
    grad_b: FB,
    out_shape: Vec<usize>,
    out_data: Vec<f64>,
) -> Result<Tensor>
where
    FA: Fn(&Tensor) -> Tensor + 'static,
    FB: Fn(&Tensor) -> Tensor + 'static,
{
    let out = Tensor {
        shape: out_shape.clone(),
        data: Arc::new(out_data),
        node: None,
    };
    out.check_finite(op)?;
    let tape = match tape {
        None => return Ok(out),
        Some(t) => t,
    };
    let ida = a.node_id_on(&tape)?;
    let idb = b.node_id_on(&tape)?;
    let (parents, backward): (Vec<usize>, BackwardFn) = match (ida, idb) {
        (Some(ia), Some(ib)) => (
            vec![ia, ib],
            Box::new(move |up| vec![grad_a(up), grad_b(up)]),
        ),
        (Some(ia), None) => (vec![ia], Box::new(move |up| vec![grad_a(up)])),
        (None, Some(ib)) => (vec![ib], Box::new(move |up| vec![grad_b(up)])),
        (None, None) => unreachable!("common_tape returned a tape without linked operands"),
    };
    Ok(record(
        tape,
        parents,
        backward,
        out_shape,
        Arc::try_unwrap(out.data).unwrap_or_else(|a| (*a).clone()),
    ))
}

/// Elementwise binary with exact-shape or scalar broadcast, driven by the
/// pointwise partials `df/da` and `df/db` evaluated at the inputs.
fn binary(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
    dfda: impl Fn(f64, f64) -> f64 + Clone + 'static,
    dfdb: impl Fn(f64, f64) -> f64 + Clone + 'static,
) -> Result<Tensor> {
    enum Cast {
        Exact,
        ScalarLhs,
        ScalarRhs,
    }
    let cast = if a.shape == b.shape {
        Cast::Exact
    } else if a.numel() == 1 {
        Cast::ScalarLhs
    } else if b.numel() == 1 {
        Cast::ScalarRhs
    } else {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    };
    let (out_shape, out_data): (Vec<usize>, Vec<f64>) = match cast {
        Cast::Exact => (
            a.shape.clone(),
            a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Cast::ScalarLhs => (
            b.shape.clone(),
            b.data.iter().map(|&y| f(a.data[0], y)).collect(),
        ),
        Cast::ScalarRhs => (
            a.shape.clone(),
            a.data.iter().map(|&x| f(x, b.data[0])).collect(),
        ),
    };
    let ad = Arc::clone(&a.data);
    let bd = Arc::clone(&b.data);
    let a_shape = a.shape.clone();
    let b_shape = b.shape.clone();
    let tape = common_tape(&[a, b])?;
    let ad2 = Arc::clone(&ad);
    let bd2 = Arc::clone(&bd);
    finalize_binary(
        op,
        tape,
        a,
        b,
        move |up: &Tensor| {
            // Gradient w.r.t. a, reduced if a was the broadcast scalar.
            let full: Vec<f64> = (0..up.numel())
                .map(|i| {
                    let x = if ad.len() == 1 { ad[0] } else { ad[i] };
                    let y = if bd.len() == 1 { bd[0] } else { bd[i] };
                    up.data[i] * dfda(x, y)
                })
                .collect();
            if a_shape.iter().product::<usize>() == 1 && up.numel() != 1 {
                Tensor {
                    shape: a_shape.clone(),
                    data: Arc::new(vec![full.iter().sum()]),
                    node: None,
                }
            } else {
                Tensor {
                    shape: a_shape.clone(),
                    data: Arc::new(full),
                    node: None,
                }
            }
        },
        move |up: &Tensor| {
            let full: Vec<f64> = (0..up.numel())
                .map(|i| {
                    let x = if ad2.len() == 1 { ad2[0] } else { ad2[i] };
                    let y = if bd2.len() == 1 { bd2[0] } else { bd2[i] };
                    up.data[i] * dfdb(x, y)
                })
                .collect();
            if b_shape.iter().product::<usize>() == 1 && up.numel() != 1 {
                Tensor {
                    shape: b_shape.clone(),
                    data: Arc::new(vec![full.iter().sum()]),
                    node: None,
                }
            } else {
                Tensor {
                    shape: b_shape.clone(),
                    data: Arc::new(full),
                    node: None,
                }
            }
        },
        out_shape,
        out_data,
    )
}

fn unary(
    a: &Tensor,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    dfdx: impl Fn(f64, f64) -> f64 + 'static, // (input, output) -> partial
) -> Result<Tensor> {
    let out_data: Vec<f64> = a.data.iter().map(|&x| f(x)).collect();
    let input = Arc::clone(&a.data);
    let output = Arc::new(out_data.clone());
    let shape = a.shape.clone();
    let tape = common_tape(&[a])?;
    finalize(
        op,
        tape,
        a,
        move |up: &Tensor| {
            let g: Vec<f64> = (0..up.numel())
                .map(|i| up.data[i] * dfdx(input[i], output[i]))
                .collect();
            Tensor {
                shape: shape.clone(),
                data: Arc::new(g),
                node: None,
            }
        },
        a.shape.clone(),
        out_data,
    )
}

// ── kernels ─────────────────────────────────────────────────────────────

fn matmul_kernel(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// `Aᵀ(k×m) @ U(m×n)` with A stored as m×k.
fn matmul_tn(a: &[f64], m: usize, k: usize, u: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let urow = &u[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * urow[j];
            }
        }
    }
    out
}

/// `U(m×n) @ Bᵀ(n×k)` with B stored as k×n.
fn matmul_nt(u: &[f64], m: usize, n: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let urow = &u[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, orow_p) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += urow[j] * brow[j];
            }
            *orow_p = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;

    #[test]
    fn exp_of_zero_is_one() {
        let t = Tensor::scalar_value(0.0).unwrap();
        assert_eq!(t.exp().unwrap().scalar().unwrap(), 1.0);
    }

    #[test]
    fn log_exp_roundtrip() {
        let t = Tensor::scalar_value(1.7).unwrap();
        let r = t.exp().unwrap().ln().unwrap().scalar().unwrap();
        assert!((r - 1.7).abs() < 1e-12);
    }

    #[test]
    fn d_x_squared_is_two_x() {
        let tape = Tape::new();
        let x = tape.var(&Tensor::scalar_value(3.0).unwrap());
        let y = x.mul(&x).unwrap();
        let grads = tape.backward(&y).unwrap();
        let g = grads.wrt(&x).unwrap().scalar().unwrap();
        assert!((g - 6.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_equal_logits() {
        let t = Tensor::new(vec![0.0, 0.0], vec![2]).unwrap();
        let v = t.log_sum_exp().unwrap().scalar().unwrap();
        assert!((v - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sum_of_ones() {
        let t = Tensor::ones(vec![3, 4]);
        assert_eq!(t.sum().unwrap().scalar().unwrap(), 12.0);
    }

    #[test]
    fn log_of_nonpositive_is_domain_error() {
        let t = Tensor::new(vec![1.0, 0.0], vec![2]).unwrap();
        assert!(matches!(t.ln(), Err(Error::Domain { .. })));
    }

    #[test]
    fn matmul_against_hand_result() {
        let a = Tensor::matrix(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        let b = Tensor::matrix(vec![5.0, 6.0, 7.0, 8.0], 2, 2).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn stop_gradient_blocks_backward_exactly() {
        // d/dx [Sg(x) * x] at x=2 -> 2: only the free factor contributes.
        let tape = Tape::new();
        let x = tape.var(&Tensor::scalar_value(2.0).unwrap());
        let y = x.detach().mul(&x).unwrap();
        let grads = tape.backward(&y).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().scalar().unwrap(), 2.0);
    }

    #[test]
    fn stop_gradient_fully_blocked_path_is_zero() {
        let tape = Tape::new();
        let x = tape.var(&Tensor::scalar_value(1.3).unwrap());
        let y = x.mul(&x).unwrap().detach().sum().unwrap();
        // y has no tape linkage at all; sum of a detached tensor is constant.
        assert!(!y.is_on_tape());
        // d/dx Sg(x^2) == 0 exactly: route the constant through a live node.
        let z = x.mul_scalar(0.0).unwrap().add(&y).unwrap();
        let grads = tape.backward(&z).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().scalar().unwrap(), 0.0);
    }

    #[test]
    fn normalize_rows_unit_norm() {
        let t = Tensor::matrix(vec![3.0, 4.0], 1, 2).unwrap();
        let n = t.normalize_rows().unwrap();
        assert!((n.data()[0] - 0.6).abs() < 1e-12);
        assert!((n.data()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn masked_fill_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.var(&Tensor::new(vec![1.0, 2.0], vec![2]).unwrap());
        let y = x.masked_fill(&[false, true], -5.0).unwrap();
        assert_eq!(y.data(), &[1.0, -5.0]);
        let loss = y.sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[1.0, 0.0]);
    }
}
