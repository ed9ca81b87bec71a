use std::sync::Arc;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Scalar function returning `(value, derivative)`.
pub type ScalarMap = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Function of one row returning the value and the gradient with respect to the row.
pub type RowMap = Arc<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>;

#[derive(Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    AffineTanh { x: NodeId, w: NodeId, b: NodeId },
    Tanh(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulConst(NodeId, Arc<Matrix>),
    AddConst(NodeId, Arc<Matrix>),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    Square(NodeId),
    Abs(NodeId),
    MaxConst(NodeId, f64),
    Map(NodeId, ScalarMap),
    RowFn(NodeId, RowMap),
    Concat(Vec<NodeId>),
    Column(NodeId, usize),
    RepeatRows(NodeId, usize),
    GroupSum(NodeId, usize),
    Mean(NodeId),
    Sum(NodeId),
}

struct Node {
    op: Op,
    value: Matrix,
    slope: Option<Vec<f64>>,
}

/// Reverse-mode recording of matrix-valued expressions.
///
/// Every operation appends a node; gradients are obtained with [`Tape::backprop`].
/// Binary elementwise operations accept equal shapes or a `1x1` right operand.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node with respect to one scalar loss.
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for the leaf `id`; leaves that do not influence the loss give zeros.
    pub fn wrt(&self, id: NodeId) -> Matrix {
        match &self.adjoints[id.0] {
            Some(m) => m.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn broadcast(b: &Matrix, i: usize) -> f64 {
    if b.len() == 1 {
        b.as_slice()[0]
    } else {
        b.as_slice()[i]
    }
}

fn check_binary(a: &Matrix, b: &Matrix, name: &str) {
    assert!(
        a.shape() == b.shape() || b.shape() == (1, 1),
        "{name}: incompatible shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    );
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.as_slice()[0]
    }

    fn push(&mut self, op: Op, value: Matrix, slope: Option<Vec<f64>>) -> NodeId {
        self.nodes.push(Node { op, value, slope });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, None)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: f64) -> NodeId {
        self.leaf(Matrix::filled(rows, cols, value))
    }

    /// Overwrites the value of a leaf; call [`Tape::replay`] afterwards to refresh dependants.
    pub fn set_leaf(&mut self, id: NodeId, value: Matrix) {
        let node = &mut self.nodes[id.0];
        assert!(matches!(node.op, Op::Leaf), "set_leaf on a non-leaf node");
        assert_eq!(node.value.shape(), value.shape(), "set_leaf shape");
        node.value = value;
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (value, _) = self.eval(&Op::Affine { x, w, b });
        self.push(Op::Affine { x, w, b }, value, None)
    }

    /// `tanh(x w + b)` stored as a single node.
    pub fn affine_tanh(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (value, _) = self.eval(&Op::AffineTanh { x, w, b });
        self.push(Op::AffineTanh { x, w, b }, value, None)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Tanh(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::Mul(a, b))
    }

    /// Elementwise product with a constant of the same shape (or `1x1`).
    pub fn mul_const(&mut self, a: NodeId, c: Arc<Matrix>) -> NodeId {
        self.record(Op::MulConst(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: Arc<Matrix>) -> NodeId {
        self.record(Op::AddConst(a, c))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.record(Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        self.record(Op::Offset(a, c))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Square(a))
    }

    /// Subgradient at 0 is 0.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Abs(a))
    }

    /// `max(a, c)`; the derivative is 1 strictly above `c` and 0 otherwise.
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.record(Op::MaxConst(a, c))
    }

    /// Elementwise scalar function with a user supplied derivative.
    pub fn map(&mut self, a: NodeId, f: ScalarMap) -> NodeId {
        self.record(Op::Map(a, f))
    }

    /// Row-wise scalar function `n x k -> n x 1`.
    pub fn row_fn(&mut self, a: NodeId, f: RowMap) -> NodeId {
        self.record(Op::RowFn(a, f))
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.record(Op::Concat(parts.to_vec()))
    }

    pub fn column(&mut self, a: NodeId, j: usize) -> NodeId {
        self.record(Op::Column(a, j))
    }

    /// Repeats each row `times` times consecutively.
    pub fn repeat_rows(&mut self, a: NodeId, times: usize) -> NodeId {
        self.record(Op::RepeatRows(a, times))
    }

    /// Sums consecutive blocks of `group` rows.
    pub fn group_sum(&mut self, a: NodeId, group: usize) -> NodeId {
        self.record(Op::GroupSum(a, group))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Mean(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Sum(a))
    }

    fn record(&mut self, op: Op) -> NodeId {
        let (value, slope) = self.eval(&op);
        self.push(op, value, slope)
    }

    fn eval(&self, op: &Op) -> (Matrix, Option<Vec<f64>>) {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Affine { x, w, b } => (affine_forward(v(x), v(w), v(b), false), None),
            Op::AffineTanh { x, w, b } => (affine_forward(v(x), v(w), v(b), true), None),
            Op::Tanh(a) => (map_values(v(a), f64::tanh), None),
            Op::Add(a, b) => (zip_values(v(a), v(b), "add", |x, y| x + y), None),
            Op::Sub(a, b) => (zip_values(v(a), v(b), "sub", |x, y| x - y), None),
            Op::Mul(a, b) => (zip_values(v(a), v(b), "mul", |x, y| x * y), None),
            Op::MulConst(a, c) => (zip_values(v(a), c, "mul_const", |x, y| x * y), None),
            Op::AddConst(a, c) => (zip_values(v(a), c, "add_const", |x, y| x + y), None),
            Op::Scale(a, c) => (map_values(v(a), |x| x * c), None),
            Op::Offset(a, c) => (map_values(v(a), |x| x + c), None),
            Op::Square(a) => (map_values(v(a), |x| x * x), None),
            Op::Abs(a) => (map_values(v(a), f64::abs), None),
            Op::MaxConst(a, c) => (map_values(v(a), |x| x.max(*c)), None),
            Op::Map(a, f) => {
                let src = v(a);
                let mut out = Vec::with_capacity(src.len());
                let mut slope = Vec::with_capacity(src.len());
                for &x in src.as_slice() {
                    let (fx, dfx) = f(x);
                    out.push(fx);
                    slope.push(dfx);
                }
                (Matrix::from_vec(src.rows(), src.cols(), out), Some(slope))
            }
            Op::RowFn(a, f) => {
                let src = v(a);
                let mut out = Vec::with_capacity(src.rows());
                let mut jac = Vec::with_capacity(src.len());
                for r in 0..src.rows() {
                    let (fx, g) = f(src.row(r));
                    assert_eq!(g.len(), src.cols(), "row_fn gradient width");
                    out.push(fx);
                    jac.extend(g);
                }
                (Matrix::column(out), Some(jac))
            }
            Op::Concat(parts) => {
                assert!(!parts.is_empty(), "concat of nothing");
                let rows = v(&parts[0]).rows();
                let cols: usize = parts.iter().map(|p| v(p).cols()).sum();
                let mut out = Matrix::zeros(rows, cols);
                let mut offset = 0;
                for p in parts {
                    let m = v(p);
                    assert_eq!(m.rows(), rows, "concat row mismatch");
                    for r in 0..rows {
                        out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
                    }
                    offset += m.cols();
                }
                (out, None)
            }
            Op::Column(a, j) => {
                let m = v(a);
                assert!(*j < m.cols(), "column index out of range");
                (Matrix::column((0..m.rows()).map(|r| m.get(r, *j)).collect()), None)
            }
            Op::RepeatRows(a, times) => {
                let m = v(a);
                let mut out = Vec::with_capacity(m.len() * times);
                for r in 0..m.rows() {
                    for _ in 0..*times {
                        out.extend_from_slice(m.row(r));
                    }
                }
                (Matrix::from_vec(m.rows() * times, m.cols(), out), None)
            }
            Op::GroupSum(a, group) => {
                let m = v(a);
                assert!(*group > 0 && m.rows() % group == 0, "group_sum: rows not divisible");
                let n = m.rows() / group;
                let mut out = Matrix::zeros(n, m.cols());
                for r in 0..m.rows() {
                    let dst = out.row_mut(r / group);
                    for (d, s) in dst.iter_mut().zip(m.row(r)) {
                        *d += *s;
                    }
                }
                (out, None)
            }
            Op::Mean(a) => {
                let m = v(a);
                let s: f64 = m.as_slice().iter().sum();
                (Matrix::scalar(s / m.len() as f64), None)
            }
            Op::Sum(a) => (Matrix::scalar(v(a).as_slice().iter().sum()), None),
        }
    }

    /// Recomputes every non-leaf node in recording order.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let (value, slope) = self.eval(&op);
            self.nodes[i].value = value;
            self.nodes[i].slope = slope;
        }
    }

    /// Reverse sweep from a `1x1` node.
    pub fn backprop(&self, loss: NodeId) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss { rows: lv.rows(), cols: lv.cols() });
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |id: &NodeId| &self.nodes[id.0].value;
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Affine { x, w, b } => {
                    affine_backward(&g, val(x), val(w), x, w, b, &mut adj, self);
                }
                Op::AffineTanh { x, w, b } => {
                    let y = &node.value;
                    let pre: Vec<f64> = g.as_slice().iter().zip(y.as_slice()).map(|(g, y)| g * (1.0 - y * y)).collect();
                    let pre = Matrix::from_vec(g.rows(), g.cols(), pre);
                    affine_backward(&pre, val(x), val(w), x, w, b, &mut adj, self);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let d = zip_slices(&g, y, |g, y| g * (1.0 - y * y));
                    accumulate(&mut adj, *a, d, self);
                }
                Op::Add(a, b) => {
                    accumulate_broadcast(&mut adj, *b, &g, 1.0, self);
                    accumulate(&mut adj, *a, g, self);
                }
                Op::Sub(a, b) => {
                    accumulate_broadcast(&mut adj, *b, &g, -1.0, self);
                    accumulate(&mut adj, *a, g, self);
                }
                Op::Mul(a, b) => {
                    let av = val(a);
                    let bv = val(b);
                    let da: Vec<f64> = g.as_slice().iter().enumerate().map(|(k, g)| g * broadcast(bv, k)).collect();
                    let db_full = zip_slices(&g, av, |g, a| g * a);
                    accumulate_broadcast(&mut adj, *b, &db_full, 1.0, self);
                    accumulate(&mut adj, *a, Matrix::from_vec(g.rows(), g.cols(), da), self);
                }
                Op::MulConst(a, c) => {
                    let da: Vec<f64> = g.as_slice().iter().enumerate().map(|(k, g)| g * broadcast(c, k)).collect();
                    accumulate(&mut adj, *a, Matrix::from_vec(g.rows(), g.cols(), da), self);
                }
                Op::AddConst(a, _) | Op::Offset(a, _) => accumulate(&mut adj, *a, g, self),
                Op::Scale(a, c) => {
                    let d = map_values(&g, |x| x * c);
                    accumulate(&mut adj, *a, d, self);
                }
                Op::Square(a) => {
                    let d = zip_slices(&g, val(a), |g, x| 2.0 * g * x);
                    accumulate(&mut adj, *a, d, self);
                }
                Op::Abs(a) => {
                    let d = zip_slices(&g, val(a), |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adj, *a, d, self);
                }
                Op::MaxConst(a, c) => {
                    let d = zip_slices(&g, val(a), |g, x| if x > *c { g } else { 0.0 });
                    accumulate(&mut adj, *a, d, self);
                }
                Op::Map(a, _) => {
                    let slope = node.slope.as_ref().expect("map slope");
                    let d: Vec<f64> = g.as_slice().iter().zip(slope).map(|(g, s)| g * s).collect();
                    accumulate(&mut adj, *a, Matrix::from_vec(g.rows(), g.cols(), d), self);
                }
                Op::RowFn(a, _) => {
                    let jac = node.slope.as_ref().expect("row_fn jacobian");
                    let (rows, cols) = val(a).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.as_slice()[r];
                        for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                            *dv = gr * jac[r * cols + c];
                        }
                    }
                    accumulate(&mut adj, *a, d, self);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = val(p).cols();
                        let mut d = Matrix::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut adj, *p, d, self);
                    }
                }
                Op::Column(a, j) => {
                    let (rows, cols) = val(a).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        d.set(r, *j, g.as_slice()[r]);
                    }
                    accumulate(&mut adj, *a, d, self);
                }
                Op::RepeatRows(a, times) => {
                    let (rows, cols) = val(a).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..g.rows() {
                        let dst = d.row_mut(r / times);
                        for (x, y) in dst.iter_mut().zip(g.row(r)) {
                            *x += *y;
                        }
                    }
                    accumulate(&mut adj, *a, d, self);
                }
                Op::GroupSum(a, group) => {
                    let (rows, cols) = val(a).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r).copy_from_slice(g.row(r / group));
                    }
                    accumulate(&mut adj, *a, d, self);
                }
                Op::Mean(a) => {
                    let (rows, cols) = val(a).shape();
                    let s = g.as_slice()[0] / (rows * cols) as f64;
                    accumulate(&mut adj, *a, Matrix::filled(rows, cols, s), self);
                }
                Op::Sum(a) => {
                    let (rows, cols) = val(a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(rows, cols, g.as_slice()[0]), self);
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }
}

fn map_values(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|&x| f(x)).collect())
}

fn zip_values(a: &Matrix, b: &Matrix, name: &str, f: impl Fn(f64, f64) -> f64) -> Matrix {
    check_binary(a, b, name);
    let out = a.as_slice().iter().enumerate().map(|(k, &x)| f(x, broadcast(b, k))).collect();
    Matrix::from_vec(a.rows(), a.cols(), out)
}

fn zip_slices(g: &Matrix, a: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let out = g.as_slice().iter().zip(a.as_slice()).map(|(&g, &a)| f(g, a)).collect();
    Matrix::from_vec(g.rows(), g.cols(), out)
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, d: Matrix, _tape: &Tape) {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn accumulate_broadcast(adj: &mut [Option<Matrix>], id: NodeId, g: &Matrix, sign: f64, tape: &Tape) {
    let shape = tape.nodes[id.0].value.shape();
    let d = if shape == g.shape() {
        map_values(g, |x| sign * x)
    } else {
        Matrix::scalar(sign * g.as_slice().iter().sum::<f64>())
    };
    accumulate(adj, id, d, tape);
}

fn affine_forward(x: &Matrix, w: &Matrix, b: &Matrix, tanh: bool) -> Matrix {
    let (n, k) = x.shape();
    let (wk, m) = w.shape();
    assert_eq!(k, wk, "affine: input width {k} vs weight rows {wk}");
    assert_eq!(b.shape(), (1, m), "affine: bias shape");
    let mut out = Matrix::zeros(n, m);
    let bias = b.as_slice();
    for r in 0..n {
        let xr = x.row(r);
        let dst = out.row_mut(r);
        dst.copy_from_slice(bias);
        for (kk, &xv) in xr.iter().enumerate() {
            for (d, &wv) in dst.iter_mut().zip(w.row(kk)) {
                *d += xv * wv;
            }
        }
        if tanh {
            for d in dst.iter_mut() {
                *d = d.tanh();
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn affine_backward(
    g: &Matrix,
    xv: &Matrix,
    wv: &Matrix,
    x: &NodeId,
    w: &NodeId,
    b: &NodeId,
    adj: &mut [Option<Matrix>],
    tape: &Tape,
) {
    let (n, k) = xv.shape();
    let m = wv.cols();
    let mut dx = Matrix::zeros(n, k);
    let mut dw = Matrix::zeros(k, m);
    let mut db = Matrix::zeros(1, m);
    for r in 0..n {
        let gr = g.row(r);
        let xr = xv.row(r);
        for (d, &gv) in db.as_mut_slice().iter_mut().zip(gr) {
            *d += gv;
        }
        let dxr = dx.row_mut(r);
        for kk in 0..k {
            let wrow = wv.row(kk);
            let mut acc = 0.0;
            for (gv, wvv) in gr.iter().zip(wrow) {
                acc += gv * wvv;
            }
            dxr[kk] = acc;
            let xk = xr[kk];
            if xk != 0.0 {
                for (d, &gv) in dw.row_mut(kk).iter_mut().zip(gr) {
                    *d += xk * gv;
                }
            }
        }
    }
    accumulate(adj, *w, dw, tape);
    accumulate(adj, *b, db, tape);
    accumulate(adj, *x, dx, tape);
}
