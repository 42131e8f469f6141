//! Dense 2-D tensors with reverse-mode automatic differentiation.
//!
//! Every tensor is a row-major `rows x cols` block of `f64`. Tensors built
//! from operations keep handles to their parents, so the computation graph
//! is the tensor DAG itself; [`Tensor::backward`] walks it in reverse
//! topological order and accumulates gradients into every leaf that was
//! created with `requires_grad`.
//!
//! The engine is deliberately small: matrix product, elementwise maps,
//! axis-0 reductions and row slicing are everything an MLP needs. Kernels
//! are deterministic (fixed summation order), so replaying the same graph
//! on the same inputs is bitwise reproducible.
//!
//! A graph belongs to one training run on one thread; `Tensor` is a cheap
//! `Rc` handle and is not `Send` by design.

use std::cell::{Ref, RefCell};
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

/// Inputs to `log` are lifted to this floor before evaluation.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: shape {shape:?} cannot hold {len} values")]
    BadShape {
        op: &'static str,
        shape: (usize, usize),
        len: usize,
    },
    #[error("{op}: empty input (zero-row batch)")]
    EmptyBatch { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("{op}: row range {start}..{end} out of bounds for {rows} rows")]
    BadSlice {
        op: &'static str,
        start: usize,
        end: usize,
        rows: usize,
    },
}

/// How a tensor was produced. Parents are held by handle, which is what
/// keeps the upstream graph alive until the loss is dropped.
enum Op {
    Leaf,
    Matmul(Tensor, Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    AddScalar(Tensor),
    MulScalar(Tensor, f64),
    /// `c - t` for constant `c`.
    SubFromScalar(Tensor),
    Relu(Tensor),
    LeakyRelu(Tensor, f64),
    Sigmoid(Tensor),
    Tanh(Tensor),
    Abs(Tensor),
    /// `ln(max(x, LOG_FLOOR))`.
    Log(Tensor),
    Neg(Tensor),
    Clamp(Tensor, f64, f64),
    /// Mean over axis 0: `[B x d] -> [1 x d]`.
    MeanRows(Tensor),
    /// Sum of all entries: `[r x c] -> [1 x 1]`.
    SumAll(Tensor),
    /// Contiguous row range of the parent.
    SliceRows(Tensor, usize),
}

struct TensorData {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Shared handle to one node of the computation graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorData>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.inner.borrow();
        write!(
            f,
            "Tensor[{}x{}, requires_grad={}]",
            d.rows, d.cols, d.requires_grad
        )
    }
}

impl Tensor {
    fn from_op(rows: usize, cols: usize, data: Vec<f64>, op: Op, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(TensorData {
                rows,
                cols,
                data,
                grad: None,
                requires_grad,
                op,
            })),
        }
    }

    /// Leaf tensor from row-major values. Does not track gradients.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::BadShape {
                op: "from_data",
                shape: (rows, cols),
                len: data.len(),
            });
        }
        Ok(Tensor::from_op(rows, cols, data, Op::Leaf, false))
    }

    /// Leaf built from rows of equal length. Test and fixture convenience.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::BadShape {
                    op: "from_rows",
                    shape: (r, c),
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::from_data(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor::from_op(rows, cols, vec![0.0; rows * cols], Op::Leaf, false)
    }

    /// `[1 x 1]` constant.
    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_op(1, 1, vec![v], Op::Leaf, false)
    }

    pub fn rows(&self) -> usize {
        self.inner.borrow().rows
    }

    pub fn cols(&self) -> usize {
        self.inner.borrow().cols
    }

    pub fn shape(&self) -> (usize, usize) {
        let d = self.inner.borrow();
        (d.rows, d.cols)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Borrow of the row-major values.
    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |d| d.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Value of a `[1 x 1]` tensor.
    pub fn item(&self) -> f64 {
        let d = self.inner.borrow();
        assert_eq!(
            (d.rows, d.cols),
            (1, 1),
            "item() on non-scalar tensor {}x{}",
            d.rows,
            d.cols
        );
        d.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Mark or unmark a leaf as trainable. Takes effect for graphs built
    /// after the call; optimizers use it to freeze networks per phase.
    pub fn set_requires_grad(&self, flag: bool) {
        self.inner.borrow_mut().requires_grad = flag;
    }

    /// Copy of the accumulated gradient, if any backward pass reached this
    /// tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Mutate values and read the gradient under one borrow. The optimizer
    /// update path.
    pub fn with_data_and_grad<R>(&self, f: impl FnOnce(&mut [f64], Option<&[f64]>) -> R) -> R {
        let mut d = self.inner.borrow_mut();
        let TensorData { data, grad, .. } = &mut *d;
        f(data.as_mut_slice(), grad.as_deref())
    }

    /// Replace the values of a leaf, keeping its shape.
    pub fn set_data(&self, values: &[f64]) {
        let mut d = self.inner.borrow_mut();
        assert_eq!(values.len(), d.data.len(), "set_data length mismatch");
        d.data.copy_from_slice(values);
    }

    /// New leaf holding a copy of the values, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        let d = self.inner.borrow();
        Tensor::from_op(d.rows, d.cols, d.data.clone(), Op::Leaf, false)
    }

    fn node_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    // ---- operations ----------------------------------------------------

    /// Matrix product `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (m, k) = self.shape();
        let (k2, n) = other.shape();
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: (m, k),
                rhs: (k2, n),
            });
        }
        let out = matmul_nn(&self.data(), &other.data(), m, k, n);
        let rg = self.requires_grad() || other.requires_grad();
        Ok(Tensor::from_op(
            m,
            n,
            out,
            Op::Matmul(self.clone(), other.clone()),
            rg,
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.binary_broadcast(other, "add", Op::Add(self.clone(), other.clone()), |a, b| {
            a + b
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.binary_broadcast(other, "sub", Op::Sub(self.clone(), other.clone()), |a, b| {
            a - b
        })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.binary_broadcast(other, "mul", Op::Mul(self.clone(), other.clone()), |a, b| {
            a * b
        })
    }

    fn binary_broadcast(
        &self,
        other: &Tensor,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let ls = self.shape();
        let rs = other.shape();
        let kind = broadcast_kind(ls, rs).ok_or(TensorError::ShapeMismatch {
            op: name,
            lhs: ls,
            rhs: rs,
        })?;
        let (rows, cols) = kind.out_shape(ls, rs);
        let a = self.data();
        let b = other.data();
        let mut out = Vec::with_capacity(rows * cols);
        match kind {
            Broadcast::Same => out.extend(a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y))),
            Broadcast::LhsScalar => {
                let x = a[0];
                out.extend(b.iter().map(|&y| f(x, y)));
            }
            Broadcast::RhsScalar => {
                let y = b[0];
                out.extend(a.iter().map(|&x| f(x, y)));
            }
            Broadcast::LhsRow => {
                for r in 0..rows {
                    let brow = &b[r * cols..(r + 1) * cols];
                    out.extend(a.iter().zip(brow.iter()).map(|(&x, &y)| f(x, y)));
                }
            }
            Broadcast::RhsRow => {
                for r in 0..rows {
                    let arow = &a[r * cols..(r + 1) * cols];
                    out.extend(arow.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)));
                }
            }
        }
        drop(a);
        drop(b);
        let rg = self.requires_grad() || other.requires_grad();
        Ok(Tensor::from_op(rows, cols, out, op, rg))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::AddScalar(self.clone()), |x| x + c)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::MulScalar(self.clone(), c), |x| x * c)
    }

    /// `c - t`, elementwise.
    pub fn sub_from_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::SubFromScalar(self.clone()), |x| c - x)
    }

    pub fn relu(&self) -> Tensor {
        // NaN propagates rather than flushing to zero, so corrupted values
        // stay visible to the run-health checks downstream.
        self.unary(Op::Relu(self.clone()), |x| {
            if x > 0.0 || x.is_nan() {
                x
            } else {
                0.0
            }
        })
    }

    pub fn leaky_relu(&self, alpha: f64) -> Tensor {
        self.unary(Op::LeakyRelu(self.clone(), alpha), |x| {
            if x > 0.0 {
                x
            } else {
                alpha * x // NaN stays NaN through the product
            }
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(Op::Sigmoid(self.clone()), sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(Op::Tanh(self.clone()), f64::tanh)
    }

    /// Absolute value; the subderivative at exactly 0 is taken as 0.
    pub fn abs(&self) -> Tensor {
        self.unary(Op::Abs(self.clone()), f64::abs)
    }

    /// Natural log of the input lifted to [`LOG_FLOOR`]. NaN propagates;
    /// `f64::max` alone would silently replace it with the floor.
    pub fn log(&self) -> Tensor {
        self.unary(Op::Log(self.clone()), |x| {
            if x.is_nan() {
                x
            } else {
                x.max(LOG_FLOOR).ln()
            }
        })
    }

    pub fn neg(&self) -> Tensor {
        self.unary(Op::Neg(self.clone()), |x| -x)
    }

    /// Clamp into `[lo, hi]`; gradient passes only where the input lies
    /// inside the interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.unary(Op::Clamp(self.clone(), lo, hi), |x| x.clamp(lo, hi))
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let (rows, cols) = self.shape();
        let out = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(rows, cols, out, op, self.requires_grad())
    }

    /// Mean over the batch axis: `[B x d] -> [1 x d]`.
    pub fn mean_rows(&self) -> Result<Tensor, TensorError> {
        let (rows, cols) = self.shape();
        if rows == 0 {
            return Err(TensorError::EmptyBatch { op: "mean_rows" });
        }
        let data = self.data();
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, &v) in out.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
                *o += v;
            }
        }
        let inv = 1.0 / rows as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        drop(data);
        Ok(Tensor::from_op(
            1,
            cols,
            out,
            Op::MeanRows(self.clone()),
            self.requires_grad(),
        ))
    }

    /// Sum of every entry, as a `[1 x 1]` tensor.
    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        Tensor::from_op(1, 1, vec![total], Op::SumAll(self.clone()), self.requires_grad())
    }

    /// Rows `start..end` as a view-copy that stays on the graph.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor, TensorError> {
        let (rows, cols) = self.shape();
        if start > end || end > rows {
            return Err(TensorError::BadSlice {
                op: "slice_rows",
                start,
                end,
                rows,
            });
        }
        let out = self.data()[start * cols..end * cols].to_vec();
        Ok(Tensor::from_op(
            end - start,
            cols,
            out,
            Op::SliceRows(self.clone(), start),
            self.requires_grad(),
        ))
    }

    // ---- backward -------------------------------------------------------

    /// Reverse-mode sweep from a scalar loss. Accumulates into `grad` of
    /// every tensor on a `requires_grad` path; repeated calls without
    /// `zero_grad` keep accumulating.
    pub fn backward(&self) -> Result<(), TensorError> {
        let shape = self.shape();
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss { shape });
        }
        if !self.requires_grad() {
            // Loss disconnected from every trainable leaf; nothing to do.
            return Ok(());
        }

        let order = topo_order(self);

        // Gradients for this sweep live in a transient map; merging into the
        // persistent buffers only at the end keeps repeated backward calls
        // exactly additive.
        let mut flowing: HashMap<usize, Vec<f64>> = HashMap::new();
        flowing.insert(self.node_id(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = flowing.get(&node.node_id()).cloned() else {
                continue;
            };
            let parents = {
                let d = node.inner.borrow();
                backward_step(&d, &g)
            };
            for (parent, delta) in parents {
                match flowing.entry(parent.node_id()) {
                    Entry::Occupied(mut e) => {
                        for (acc, &v) in e.get_mut().iter_mut().zip(&delta) {
                            *acc += v;
                        }
                    }
                    Entry::Vacant(e) => {
                        e.insert(delta);
                    }
                }
            }
        }

        for node in &order {
            if let Some(g) = flowing.remove(&node.node_id()) {
                node.accumulate(&g);
            }
        }
        Ok(())
    }

    fn accumulate(&self, delta: &[f64]) {
        let mut d = self.inner.borrow_mut();
        match &mut d.grad {
            Some(g) => {
                for (gi, &di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => d.grad = Some(delta.to_vec()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
    /// Lhs is `[1 x c]`, rhs `[r x c]`.
    LhsRow,
    /// Rhs is `[1 x c]`, lhs `[r x c]`.
    RhsRow,
}

impl Broadcast {
    fn out_shape(self, l: (usize, usize), r: (usize, usize)) -> (usize, usize) {
        match self {
            Broadcast::Same | Broadcast::RhsScalar | Broadcast::RhsRow => l,
            Broadcast::LhsScalar | Broadcast::LhsRow => r,
        }
    }
}

/// Supported shape pairs: identical, scalar against anything, and a
/// `[1 x c]` row against `[r x c]`.
fn broadcast_kind(l: (usize, usize), r: (usize, usize)) -> Option<Broadcast> {
    if l == r {
        Some(Broadcast::Same)
    } else if l == (1, 1) {
        Some(Broadcast::LhsScalar)
    } else if r == (1, 1) {
        Some(Broadcast::RhsScalar)
    } else if l.0 == 1 && l.1 == r.1 {
        Some(Broadcast::LhsRow)
    } else if r.0 == 1 && r.1 == l.1 {
        Some(Broadcast::RhsRow)
    } else {
        None
    }
}

/// Postorder over the `requires_grad` subgraph reachable from `root`.
/// Iterative so that deep chains cannot overflow the stack.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    // (node, children_pushed)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.node_id()) {
            continue;
        }
        stack.push((node.clone(), true));
        let d = node.inner.borrow();
        for parent in op_parents(&d.op) {
            if parent.requires_grad() && !visited.contains(&parent.node_id()) {
                stack.push((parent, false));
            }
        }
    }
    order
}

fn op_parents(op: &Op) -> Vec<Tensor> {
    match op {
        Op::Leaf => vec![],
        Op::Matmul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
            vec![a.clone(), b.clone()]
        }
        Op::AddScalar(t)
        | Op::MulScalar(t, _)
        | Op::SubFromScalar(t)
        | Op::Relu(t)
        | Op::LeakyRelu(t, _)
        | Op::Sigmoid(t)
        | Op::Tanh(t)
        | Op::Abs(t)
        | Op::Log(t)
        | Op::Neg(t)
        | Op::Clamp(t, _, _)
        | Op::MeanRows(t)
        | Op::SumAll(t)
        | Op::SliceRows(t, _) => vec![t.clone()],
    }
}

/// Per-op vector-Jacobian products for one node given its flowing gradient.
/// Returns `(parent, contribution)` pairs for every parent that wants one.
fn backward_step(d: &TensorData, g: &[f64]) -> Vec<(Tensor, Vec<f64>)> {
    let (rows, cols) = (d.rows, d.cols);
    let mut out = Vec::new();
    match &d.op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (m, k) = a.shape();
            let n = b.cols();
            if a.requires_grad() {
                // dA = g . B^T
                out.push((a.clone(), matmul_nt(g, &b.data(), m, n, k)));
            }
            if b.requires_grad() {
                // dB = A^T . g
                out.push((b.clone(), matmul_tn(&a.data(), g, m, k, n)));
            }
        }
        Op::Add(a, b) => {
            if a.requires_grad() {
                out.push((a.clone(), reduce_to_shape(g, (rows, cols), a.shape())));
            }
            if b.requires_grad() {
                out.push((b.clone(), reduce_to_shape(g, (rows, cols), b.shape())));
            }
        }
        Op::Sub(a, b) => {
            if a.requires_grad() {
                out.push((a.clone(), reduce_to_shape(g, (rows, cols), a.shape())));
            }
            if b.requires_grad() {
                let neg: Vec<f64> = g.iter().map(|&x| -x).collect();
                out.push((b.clone(), reduce_to_shape(&neg, (rows, cols), b.shape())));
            }
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                let other = expand_to_shape(&b.data(), b.shape(), (rows, cols));
                let delta: Vec<f64> = g.iter().zip(&other).map(|(&gi, &o)| gi * o).collect();
                out.push((a.clone(), reduce_to_shape(&delta, (rows, cols), a.shape())));
            }
            if b.requires_grad() {
                let other = expand_to_shape(&a.data(), a.shape(), (rows, cols));
                let delta: Vec<f64> = g.iter().zip(&other).map(|(&gi, &o)| gi * o).collect();
                out.push((b.clone(), reduce_to_shape(&delta, (rows, cols), b.shape())));
            }
        }
        Op::AddScalar(t) => push_unary(&mut out, t, g.to_vec()),
        Op::MulScalar(t, c) => push_unary(&mut out, t, g.iter().map(|&x| c * x).collect()),
        Op::SubFromScalar(t) => push_unary(&mut out, t, g.iter().map(|&x| -x).collect()),
        Op::Relu(t) => {
            let x = t.data();
            let delta = g
                .iter()
                .zip(x.iter())
                .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                .collect();
            drop(x);
            push_unary(&mut out, t, delta);
        }
        Op::LeakyRelu(t, alpha) => {
            let x = t.data();
            let delta = g
                .iter()
                .zip(x.iter())
                .map(|(&gi, &xi)| if xi > 0.0 { gi } else { alpha * gi })
                .collect();
            drop(x);
            push_unary(&mut out, t, delta);
        }
        Op::Sigmoid(t) => {
            // sigma' = y (1 - y) from the stored output.
            let delta = g
                .iter()
                .zip(d.data.iter())
                .map(|(&gi, &y)| gi * y * (1.0 - y))
                .collect();
            push_unary(&mut out, t, delta);
        }
        Op::Tanh(t) => {
            let delta = g
                .iter()
                .zip(d.data.iter())
                .map(|(&gi, &y)| gi * (1.0 - y * y))
                .collect();
            push_unary(&mut out, t, delta);
        }
        Op::Abs(t) => {
            // Subderivative 0 at exactly 0.
            let x = t.data();
            let delta = g
                .iter()
                .zip(x.iter())
                .map(|(&gi, &xi)| {
                    if xi > 0.0 {
                        gi
                    } else if xi < 0.0 {
                        -gi
                    } else {
                        0.0
                    }
                })
                .collect();
            drop(x);
            push_unary(&mut out, t, delta);
        }
        Op::Log(t) => {
            // Zero slope below the floor, 1/x above it.
            let x = t.data();
            let delta = g
                .iter()
                .zip(x.iter())
                .map(|(&gi, &xi)| if xi >= LOG_FLOOR { gi / xi } else { 0.0 })
                .collect();
            drop(x);
            push_unary(&mut out, t, delta);
        }
        Op::Neg(t) => push_unary(&mut out, t, g.iter().map(|&x| -x).collect()),
        Op::Clamp(t, lo, hi) => {
            let x = t.data();
            let delta = g
                .iter()
                .zip(x.iter())
                .map(|(&gi, &xi)| if xi >= *lo && xi <= *hi { gi } else { 0.0 })
                .collect();
            drop(x);
            push_unary(&mut out, t, delta);
        }
        Op::MeanRows(t) => {
            let (b, c) = t.shape();
            let inv = 1.0 / b as f64;
            let mut delta = Vec::with_capacity(b * c);
            for _ in 0..b {
                delta.extend(g.iter().map(|&x| x * inv));
            }
            push_unary(&mut out, t, delta);
        }
        Op::SumAll(t) => {
            let delta = vec![g[0]; t.len()];
            push_unary(&mut out, t, delta);
        }
        Op::SliceRows(t, start) => {
            let (pr, pc) = t.shape();
            let mut delta = vec![0.0; pr * pc];
            delta[start * pc..start * pc + rows * pc].copy_from_slice(g);
            push_unary(&mut out, t, delta);
        }
    }
    out
}

fn push_unary(out: &mut Vec<(Tensor, Vec<f64>)>, t: &Tensor, delta: Vec<f64>) {
    if t.requires_grad() {
        out.push((t.clone(), delta));
    }
}

/// Sum a full-shape gradient down to the (possibly broadcast) parent shape.
fn reduce_to_shape(g: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    if from == to {
        return g.to_vec();
    }
    if to == (1, 1) {
        return vec![g.iter().sum()];
    }
    // Row vector broadcast over the batch: sum over rows.
    let (rows, cols) = from;
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for (o, &v) in out.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
    out
}

/// Materialize a (possibly broadcast) operand to the full output shape.
fn expand_to_shape(v: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    if from == to {
        return v.to_vec();
    }
    let (rows, cols) = to;
    if from == (1, 1) {
        return vec![v[0]; rows * cols];
    }
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        out.extend_from_slice(v);
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---- matmul kernels ------------------------------------------------------
//
// Row-major, fixed accumulation order (ascending inner index) so results are
// reproducible bit for bit. The i-k-j order keeps the inner loop a
// contiguous fused multiply-add that the compiler vectorizes.

/// `C = A . B` with `A [m x k]`, `B [k x n]`.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `C = A . B^T` with `A [m x n]`, `B [k x n]`, result `[m x k]`.
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let crow = &mut c[i * k..(i + 1) * k];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv = acc;
        }
    }
    c
}

/// `C = A^T . B` with `A [m x k]`, `B [m x n]`, result `[k x n]`.
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}


#[cfg(test)]
mod bench {
    use super::*;

    #[test]
    #[ignore]
    fn matmul_throughput_probe() {
        let (m, k, n) = (512, 256, 128);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.001).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.002).cos()).collect();
        let reps = 50;
        let t0 = std::time::Instant::now();
        let mut sink = 0.0;
        for _ in 0..reps {
            let c = matmul_nn(&a, &b, m, k, n);
            sink += c[0];
        }
        let dt = t0.elapsed().as_secs_f64();
        let gflops = (2.0 * (m * k * n) as f64 * reps as f64) / dt / 1e9;
        println!("matmul 512x256x128: {gflops:.2} GFLOP/s (sink {sink})");
    }
}
