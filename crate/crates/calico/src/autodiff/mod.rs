//! Reverse-mode automatic differentiation over flat `f64` vectors.
//!
//! A [`Tape`] records every operation eagerly: forward values are computed at
//! call time and the operation is appended so that a single reverse sweep can
//! accumulate gradients. All values are vectors; matrices appear only as the
//! left operand of [`Var::matvec`], stored row-major with the row count
//! inferred from the vector operand. The tape is a DAG: reusing a [`Var`] in
//! several places is allowed and its gradient contributions sum.
//!
//! The primitive set is the closure of everything the executor, the
//! calibrators, and the losses need: add, sub, mul, scale, neg, matvec, dot,
//! concat, slice, sum, mean, max, min, sigmoid, tanh, relu, ln, l2_normalize,
//! softmax. `max`/`min` route their gradient to the first extremal index on
//! ties.

pub mod check;
pub mod lstm;
pub mod params;

pub use check::{grad_check, GradCheckReport};
pub use params::{ParamStore, Session};

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Norms below this are refused by `l2_normalize`.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Neg(usize),
    MatVec { m: usize, v: usize, rows: usize, cols: usize },
    Dot(usize, usize),
    Concat(Vec<usize>),
    Slice { x: usize, start: usize },
    Sum(usize),
    Mean(usize),
    Max { x: usize, arg: usize },
    Min { x: usize, arg: usize },
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Ln(usize),
    L2Normalize { x: usize, norm: f64 },
    Softmax(usize),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// Shared, growable operation record.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to one tape node.
#[derive(Debug, Clone)]
pub struct Var {
    tape: Tape,
    index: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Vec<f64>, op: Op) -> Var {
        let mut inner = self.inner.borrow_mut();
        let index = inner.nodes.len();
        let grad = vec![0.0; value.len()];
        inner.nodes.push(Node { value, grad, op });
        Var {
            tape: self.clone(),
            index,
        }
    }

    /// Record a leaf holding `value`.
    pub fn constant(&self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(vec![value])
    }

    fn same_tape(&self, other: &Tape) -> Result<()> {
        if Rc::ptr_eq(&self.inner, &other.inner) {
            Ok(())
        } else {
            Err(Error::Shape("operands live on different tapes".into()))
        }
    }

    /// Reverse sweep from a scalar root: zeroes all gradients, seeds the root
    /// with 1, then visits every node exactly once in reverse creation order,
    /// accumulating into its inputs (shared inputs sum).
    pub fn backward(&self, root: &Var) -> Result<()> {
        self.same_tape(&root.tape)?;
        let mut inner = self.inner.borrow_mut();
        let nodes = &mut inner.nodes;
        if nodes[root.index].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward root must be scalar, got length {}",
                nodes[root.index].value.len()
            )));
        }
        for node in nodes.iter_mut() {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        nodes[root.index].grad[0] = 1.0;
        for i in (0..=root.index).rev() {
            // Inputs always precede their consumers, so split at i: everything
            // this node reads or writes lives in `before`.
            let (before, rest) = nodes.split_at_mut(i);
            let node = &rest[0];
            backprop(node, before);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: &Var) -> Vec<f64> {
        self.inner.borrow().nodes[v.index].grad.clone()
    }
}

fn backprop(node: &Node, before: &mut [Node]) {
    let g = &node.grad;
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for (i, gi) in g.iter().enumerate() {
                before[*a].grad[i] += gi;
            }
            for (i, gi) in g.iter().enumerate() {
                before[*b].grad[i] += gi;
            }
        }
        Op::Sub(a, b) => {
            for (i, gi) in g.iter().enumerate() {
                before[*a].grad[i] += gi;
                before[*b].grad[i] -= gi;
            }
        }
        Op::Mul(a, b) => {
            for (i, gi) in g.iter().enumerate() {
                let av = before[*a].value[i];
                let bv = before[*b].value[i];
                before[*a].grad[i] += gi * bv;
                before[*b].grad[i] += gi * av;
            }
        }
        Op::Scale(a, c) => {
            for (i, gi) in g.iter().enumerate() {
                before[*a].grad[i] += gi * c;
            }
        }
        Op::Neg(a) => {
            for (i, gi) in g.iter().enumerate() {
                before[*a].grad[i] -= gi;
            }
        }
        Op::MatVec { m, v, rows, cols } => {
            for (r, &gr) in g.iter().enumerate().take(*rows) {
                if gr == 0.0 {
                    continue;
                }
                for c in 0..*cols {
                    let vc = before[*v].value[c];
                    before[*m].grad[r * cols + c] += gr * vc;
                }
            }
            for c in 0..*cols {
                let mut acc = 0.0;
                for (r, &gr) in g.iter().enumerate().take(*rows) {
                    acc += before[*m].value[r * cols + c] * gr;
                }
                before[*v].grad[c] += acc;
            }
        }
        Op::Dot(a, b) => {
            let g0 = g[0];
            for i in 0..before[*a].value.len() {
                let av = before[*a].value[i];
                let bv = before[*b].value[i];
                before[*a].grad[i] += g0 * bv;
                before[*b].grad[i] += g0 * av;
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = before[p].value.len();
                for i in 0..len {
                    before[p].grad[i] += g[offset + i];
                }
                offset += len;
            }
        }
        Op::Slice { x, start } => {
            for (i, gi) in g.iter().enumerate() {
                before[*x].grad[start + i] += gi;
            }
        }
        Op::Sum(x) => {
            let g0 = g[0];
            for gx in before[*x].grad.iter_mut() {
                *gx += g0;
            }
        }
        Op::Mean(x) => {
            let n = before[*x].value.len() as f64;
            let g0 = g[0] / n;
            for gx in before[*x].grad.iter_mut() {
                *gx += g0;
            }
        }
        Op::Max { x, arg } | Op::Min { x, arg } => {
            before[*x].grad[*arg] += g[0];
        }
        Op::Sigmoid(x) => {
            for i in 0..g.len() {
                before[*x].grad[i] += g[i] * y[i] * (1.0 - y[i]);
            }
        }
        Op::Tanh(x) => {
            for i in 0..g.len() {
                before[*x].grad[i] += g[i] * (1.0 - y[i] * y[i]);
            }
        }
        Op::Relu(x) => {
            for (i, gi) in g.iter().enumerate() {
                if before[*x].value[i] > 0.0 {
                    before[*x].grad[i] += gi;
                }
            }
        }
        Op::Ln(x) => {
            for (i, gi) in g.iter().enumerate() {
                before[*x].grad[i] += gi / before[*x].value[i];
            }
        }
        Op::L2Normalize { x, norm } => {
            // y = x / |x|; dx = (g - (g . y) y) / |x|
            let gy: f64 = g.iter().zip(y.iter()).map(|(gi, yi)| gi * yi).sum();
            for i in 0..g.len() {
                before[*x].grad[i] += (g[i] - gy * y[i]) / norm;
            }
        }
        Op::Softmax(x) => {
            let gy: f64 = g.iter().zip(y.iter()).map(|(gi, yi)| gi * yi).sum();
            for i in 0..g.len() {
                before[*x].grad[i] += y[i] * (g[i] - gy);
            }
        }
    }
}

impl Var {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn len(&self) -> usize {
        self.tape.inner.borrow().nodes[self.index].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Vec<f64> {
        self.tape.inner.borrow().nodes[self.index].value.clone()
    }

    pub fn value_at(&self, i: usize) -> f64 {
        self.tape.inner.borrow().nodes[self.index].value[i]
    }

    /// The single element of a length-1 value.
    pub fn scalar_value(&self) -> Result<f64> {
        let inner = self.tape.inner.borrow();
        let v = &inner.nodes[self.index].value;
        if v.len() != 1 {
            return Err(Error::Shape(format!("expected scalar, got length {}", v.len())));
        }
        Ok(v[0])
    }

    /// Gradient recorded by the last backward pass.
    pub fn grad(&self) -> Vec<f64> {
        self.tape.grad(self)
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(self)
    }

    fn binary(&self, other: &Var, op: fn(usize, usize) -> Op, f: fn(f64, f64) -> f64) -> Result<Var> {
        self.tape.same_tape(&other.tape)?;
        let (a, b) = (self.value(), other.value());
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "elementwise operands differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let value = a.iter().zip(b.iter()).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.tape.push(value, op(self.index, other.index)))
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Add, |x, y| x + y)
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Mul, |x, y| x * y)
    }

    pub fn scale(&self, c: f64) -> Var {
        let value = self.value().iter().map(|x| x * c).collect();
        self.tape.push(value, Op::Scale(self.index, c))
    }

    pub fn neg(&self) -> Var {
        let value = self.value().iter().map(|x| -x).collect();
        self.tape.push(value, Op::Neg(self.index))
    }

    /// Row-major matrix times vector; rows are inferred from `self.len() /
    /// v.len()`.
    pub fn matvec(&self, v: &Var) -> Result<Var> {
        self.tape.same_tape(&v.tape)?;
        let m = self.value();
        let x = v.value();
        if x.is_empty() || !m.len().is_multiple_of(x.len()) {
            return Err(Error::Shape(format!(
                "matvec: matrix of {} entries is not a multiple of vector length {}",
                m.len(),
                x.len()
            )));
        }
        let cols = x.len();
        let rows = m.len() / cols;
        let mut value = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += m[r * cols + c] * x[c];
            }
            value[r] = acc;
        }
        Ok(self.tape.push(
            value,
            Op::MatVec {
                m: self.index,
                v: v.index,
                rows,
                cols,
            },
        ))
    }

    pub fn dot(&self, other: &Var) -> Result<Var> {
        self.tape.same_tape(&other.tape)?;
        let (a, b) = (self.value(), other.value());
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "dot operands differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let value = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        Ok(self
            .tape
            .push(vec![value], Op::Dot(self.index, other.index)))
    }

    pub fn concat(vars: &[Var]) -> Result<Var> {
        let first = vars
            .first()
            .ok_or_else(|| Error::Shape("concat of zero vectors".into()))?;
        let mut value = Vec::new();
        let mut parts = Vec::with_capacity(vars.len());
        for v in vars {
            first.tape.same_tape(&v.tape)?;
            value.extend(v.value());
            parts.push(v.index);
        }
        Ok(first.tape.push(value, Op::Concat(parts)))
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Var> {
        let v = self.value();
        if start + len > v.len() {
            return Err(Error::Shape(format!(
                "slice {}..{} out of range for length {}",
                start,
                start + len,
                v.len()
            )));
        }
        Ok(self.tape.push(
            v[start..start + len].to_vec(),
            Op::Slice {
                x: self.index,
                start,
            },
        ))
    }

    pub fn sum(&self) -> Var {
        let value = self.value().iter().sum();
        self.tape.push(vec![value], Op::Sum(self.index))
    }

    pub fn mean(&self) -> Result<Var> {
        let v = self.value();
        if v.is_empty() {
            return Err(Error::Shape("mean of empty vector".into()));
        }
        let value = v.iter().sum::<f64>() / v.len() as f64;
        Ok(self.tape.push(vec![value], Op::Mean(self.index)))
    }

    /// Maximum element; gradient flows to the first maximal index.
    pub fn max(&self) -> Result<Var> {
        let v = self.value();
        if v.is_empty() {
            return Err(Error::Shape("max of empty vector".into()));
        }
        let arg = argmax(&v);
        Ok(self.tape.push(
            vec![v[arg]],
            Op::Max {
                x: self.index,
                arg,
            },
        ))
    }

    /// Minimum element; gradient flows to the first minimal index.
    pub fn min(&self) -> Result<Var> {
        let v = self.value();
        if v.is_empty() {
            return Err(Error::Shape("min of empty vector".into()));
        }
        let mut arg = 0;
        for (i, x) in v.iter().enumerate() {
            if *x < v[arg] {
                arg = i;
            }
        }
        Ok(self.tape.push(
            vec![v[arg]],
            Op::Min {
                x: self.index,
                arg,
            },
        ))
    }

    pub fn sigmoid(&self) -> Var {
        let value = self.value().iter().map(|x| sigmoid(*x)).collect();
        self.tape.push(value, Op::Sigmoid(self.index))
    }

    pub fn tanh(&self) -> Var {
        let value = self.value().iter().map(|x| x.tanh()).collect();
        self.tape.push(value, Op::Tanh(self.index))
    }

    pub fn relu(&self) -> Var {
        let value = self.value().iter().map(|x| x.max(0.0)).collect();
        self.tape.push(value, Op::Relu(self.index))
    }

    pub fn ln(&self) -> Var {
        let value = self.value().iter().map(|x| x.ln()).collect();
        self.tape.push(value, Op::Ln(self.index))
    }

    /// `x / |x|`; refuses near-zero vectors.
    pub fn l2_normalize(&self) -> Result<Var> {
        let v = self.value();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < ZERO_NORM_EPS {
            return Err(Error::ZeroVector { norm });
        }
        let value = v.iter().map(|x| x / norm).collect();
        Ok(self.tape.push(
            value,
            Op::L2Normalize {
                x: self.index,
                norm,
            },
        ))
    }

    pub fn softmax(&self) -> Result<Var> {
        let v = self.value();
        if v.is_empty() {
            return Err(Error::Shape("softmax of empty vector".into()));
        }
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let value = exps.iter().map(|e| e / z).collect();
        Ok(self.tape.push(value, Op::Softmax(self.index)))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// First maximal index.
pub fn argmax(v: &[f64]) -> usize {
    let mut arg = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[arg] {
            arg = i;
        }
    }
    arg
}
