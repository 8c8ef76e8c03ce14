//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! A [`Tape`] records every operation in creation order, which is also a
//! topological order of the computation DAG. [`Tape::backward`] walks the
//! recorded nodes once in reverse and accumulates `∂loss/∂node` into each
//! node's gradient buffer.
//!
//! All tensors are `Array2<f64>`: vectors are `1 × n` rows, scalars are
//! `1 × 1`, and a batch is an explicit leading dimension. The only
//! broadcast supported is a `1 × n` row against an `m × n` batch.
//!
//! ```
//! use cpr::autodiff::{Tape, Tensor};
//! use ndarray::array;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(array![[0.0]]);
//! let y = tape.sigmoid(x);
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.value(y)[[0, 0]], 0.5);
//! assert_eq!(tape.grad(x)[[0, 0]], 0.25);
//! ```

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub type Tensor = Array2<f64>;

/// Clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Second operand may be a `1 × n` row broadcast over the rows of the first.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Bce(Var, Tensor),
    L1(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Records operations for a single forward/backward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape(t: &Tensor) -> (usize, usize) {
    t.dim()
}

pub fn scalar(v: f64) -> Tensor {
    Array2::from_elem((1, 1), v)
}

pub fn row(values: &[f64]) -> Tensor {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = Array2::zeros(value.raw_dim());
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor (parameter, observation or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    /// Value of a `1 × 1` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (shape(self.value(a)), shape(self.value(b)));
        if sa.1 != sb.0 {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let out = self.value(a).dot(self.value(b));
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (shape(self.value(a)), shape(self.value(b)));
        if sa == sb || (sb.0 == 1 && sb.1 == sa.1) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb })
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (shape(self.value(a)), shape(self.value(b)));
        if sa != sb {
            return Err(Error::ShapeMismatch { op: "mul", lhs: sa, rhs: sb });
        }
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a) * factor;
        self.push(out, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant (masks, per-element weights).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let (sa, sc) = (shape(self.value(a)), shape(&c));
        if sa != sc {
            return Err(Error::ShapeMismatch { op: "mul_const", lhs: sa, rhs: sc });
        }
        let out = self.value(a) * &c;
        Ok(self.push(out, Op::MulConst(a, c)))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rows = self.value(*first).nrows();
        for p in parts {
            let s = shape(self.value(*p));
            if s.0 != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: shape(self.value(*first)),
                    rhs: s,
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("checked shapes");
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = shape(self.value(a));
        if start >= end || end > s.1 {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: s,
                rhs: (start, end),
            });
        }
        let out = self
            .value(a)
            .slice(ndarray::s![.., start..end])
            .to_owned();
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid_scalar);
        self.push(out, Op::Sigmoid(a))
    }

    /// Elementwise absolute value; subgradient at zero is zero.
    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::abs);
        self.push(out, Op::Abs(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = scalar(v.sum() / v.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Row sums: `m × n` to `m × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::SumCols(a))
    }

    /// Elementwise binary cross-entropy of probabilities `p` against
    /// targets in {0, 1}. Probabilities are clipped to `[ε, 1 − ε]`.
    pub fn bce(&mut self, p: Var, target: Tensor) -> Result<Var> {
        let (sp, st) = (shape(self.value(p)), shape(&target));
        if sp != st {
            return Err(Error::ShapeMismatch { op: "bce", lhs: sp, rhs: st });
        }
        let mut out = self.value(p).clone();
        ndarray::Zip::from(&mut out).and(&target).for_each(|o, &y| {
            let q = o.clamp(PROB_EPS, 1.0 - PROB_EPS);
            *o = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
        });
        Ok(self.push(out, Op::Bce(p, target)))
    }

    /// Sum of absolute values, as a `1 × 1` node.
    pub fn l1(&mut self, a: Var) -> Var {
        let out = scalar(self.value(a).iter().map(|v| v.abs()).sum());
        self.push(out, Op::L1(a))
    }

    /// Accumulates `∂loss/∂v` into the gradient of every node reachable
    /// from `loss`. Calling it twice without [`Tape::zero_grad`] doubles
    /// the stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = shape(self.value(loss));
        if s != (1, 1) {
            return Err(Error::NonScalarLoss(s));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            self.nodes[i].grad += &g;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, delta: Tensor| match &mut adj[v.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                acc(*a, g.dot(&bv.t()));
                acc(*b, av.t().dot(g));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, g.clone());
                let bshape = self.nodes[b.0].value.dim();
                let gb = if bshape == g.dim() {
                    g.clone()
                } else {
                    g.sum_axis(Axis(0)).insert_axis(Axis(0))
                };
                acc(*b, gb * sign);
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                acc(*a, g * bv);
                acc(*b, g * av);
            }
            Op::Scale(a, f) => acc(*a, g * *f),
            Op::MulConst(a, c) => acc(*a, g * c),
            Op::Concat(parts) => {
                let mut col = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.ncols();
                    acc(*p, g.slice(ndarray::s![.., col..col + w]).to_owned());
                    col += w;
                }
            }
            Op::SliceCols(a, start) => {
                let mut full = Array2::zeros(self.nodes[a.0].value.raw_dim());
                full.slice_mut(ndarray::s![.., *start..*start + g.ncols()])
                    .assign(g);
                acc(*a, full);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                acc(*a, g * &y.mapv(|t| 1.0 - t * t));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc(*a, g * &y.mapv(|s| s * (1.0 - s)));
            }
            Op::Abs(a) => {
                let x = &self.nodes[a.0].value;
                acc(*a, g * &x.mapv(sign));
            }
            Op::Sum(a) => {
                let x = &self.nodes[a.0].value;
                acc(*a, Array2::from_elem(x.raw_dim(), g[[0, 0]]));
            }
            Op::Mean(a) => {
                let x = &self.nodes[a.0].value;
                let n = x.len() as f64;
                acc(*a, Array2::from_elem(x.raw_dim(), g[[0, 0]] / n));
            }
            Op::SumCols(a) => {
                let x = &self.nodes[a.0].value;
                let mut out = Array2::zeros(x.raw_dim());
                for (mut r, gi) in out.rows_mut().into_iter().zip(g.column(0)) {
                    r.fill(*gi);
                }
                acc(*a, out);
            }
            Op::Bce(p, target) => {
                let pv = &self.nodes[p.0].value;
                let mut d = pv.clone();
                ndarray::Zip::from(&mut d).and(target).for_each(|o, &y| {
                    let q = o.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    *o = (q - y) / (q * (1.0 - q));
                });
                acc(*p, d * g);
            }
            Op::L1(a) => {
                let x = &self.nodes[a.0].value;
                acc(*a, x.mapv(sign) * g[[0, 0]]);
            }
        }
    }
}

/// Compares reverse-mode gradients of `f` at `point` against central
/// finite differences. Returns `max_i |ad_i − fd_i| / max(1, |fd_i|)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&mut tape, x)?;
    let y0 = tape.scalar_value(y);
    if !y0.is_finite() {
        return Err(Error::NonFinite(format!("f(point) = {y0}")));
    }
    tape.backward(y)?;
    let analytic = tape.grad(x).clone();

    let eval = |p: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let x = t.leaf(p);
        let y = f(&mut t, x)?;
        let v = t.scalar_value(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("f(perturbed point) = {v}")))
        }
    };

    let mut worst = 0.0_f64;
    for (idx, &ad) in analytic.indexed_iter() {
        let mut plus = point.clone();
        plus[idx] += step;
        let mut minus = point.clone();
        minus[idx] -= step;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
        worst = worst.max((ad - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}
