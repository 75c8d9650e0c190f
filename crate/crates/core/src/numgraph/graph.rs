//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its value; [`Graph::backward`] walks the tape in reverse and
//! leaves an adjoint on every node that depends on a leaf created with
//! [`Graph::param`].
//!
//! Elementwise binary operations broadcast: each dimension of the two operands
//! must either agree or be `1`.

use super::special;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    Relu(Var),
    Softplus(Var),
    Digamma(Var),
    Lgamma(Var),
    ClampMin(Var, f64),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    MaxCols(Var, Vec<usize>),
    SoftmaxRows(Var, f64),
    LogSoftmaxRows(Var),
    SelectCols(Var, Vec<usize>),
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of a single forward computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn broadcast_shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<[usize; 2]> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a[0], b[0]), dim(a[1], b[1])) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(Error::shape(op, a, b)),
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, shape: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Tensor {
    let [ar, ac] = a.shape();
    let [br, bc] = b.shape();
    Tensor::from_fn(shape[0], shape[1], |r, c| {
        let x = a.get(if ar == 1 { 0 } else { r }, if ac == 1 { 0 } else { c });
        let y = b.get(if br == 1 { 0 } else { r }, if bc == 1 { 0 } else { c });
        f(x, y)
    })
}

/// Sums `grad` down to `shape`, undoing a broadcast.
fn reduce_to(grad: Tensor, shape: [usize; 2]) -> Tensor {
    if grad.shape() == shape {
        return grad;
    }
    let mut out = Tensor::zeros(shape[0], shape[1]);
    for r in 0..grad.rows() {
        for c in 0..grad.cols() {
            let rr = if shape[0] == 1 { 0 } else { r };
            let cc = if shape[1] == 1 { 0 } else { c };
            let v = out.get(rr, cc) + grad.get(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of `scale * x`, stabilised by subtracting the row max.
pub fn softmax_rows(x: &Tensor, scale: f64) -> Result<Tensor> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::numeric("softmax input contains NaN"));
    }
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row_slice(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(scale * v));
        let mut total = 0.0;
        for (c, &v) in row.iter().enumerate() {
            let e = (scale * v - max).exp();
            out.set(r, c, e);
            total += e;
        }
        for c in 0..x.cols() {
            out.set(r, c, out.get(r, c) / total);
        }
    }
    Ok(out)
}

fn log_softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::numeric("log-softmax input contains NaN"));
    }
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (c, &v) in row.iter().enumerate() {
            out.set(r, c, v - lse);
        }
    }
    Ok(out)
}

fn try_map(x: &Tensor, f: impl Fn(f64) -> Result<f64>) -> Result<Tensor> {
    let data = x.data().iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
    Tensor::new(x.rows(), x.cols(), data)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Differentiable leaf (a parameter or an input under test).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adjoint of `v` after [`Graph::backward`]; `None` when `v` does not
    /// depend on any differentiable leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var> {
        let shape = broadcast_shape(op, self.shape(a), self.shape(b))?;
        let value = broadcast_zip(self.value(a), self.value(b), shape, f);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, node, rg))
    }

    fn unary(&mut self, a: Var, value: Tensor, node: Op) -> Var {
        let rg = self.needs(&[a]);
        self.push(value, node, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        self.unary(a, value, Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        self.unary(a, value, Op::AddScalar(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.unary(a, value, Op::Transpose(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.unary(a, value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let value = try_map(self.value(a), |x| {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(Error::numeric(format!("ln of non-positive value {x}")))
            }
        })?;
        Ok(self.unary(a, value, Op::Ln(a)))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let value = try_map(self.value(a), |x| {
            if x > 0.0 {
                Ok(x.sqrt())
            } else {
                Err(Error::numeric(format!("sqrt of non-positive value {x}")))
            }
        })?;
        Ok(self.unary(a, value, Op::Sqrt(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.unary(a, value, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.unary(a, value, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.unary(a, value, Op::Softplus(a))
    }

    pub fn digamma(&mut self, a: Var) -> Result<Var> {
        let value = try_map(self.value(a), special::digamma)?;
        Ok(self.unary(a, value, Op::Digamma(a)))
    }

    pub fn lgamma(&mut self, a: Var) -> Result<Var> {
        let value = try_map(self.value(a), special::lgamma)?;
        Ok(self.unary(a, value, Op::Lgamma(a)))
    }

    /// `max(a, floor)` elementwise; the gradient passes only where `a > floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|x| x.max(floor));
        self.unary(a, value, Op::ClampMin(a, floor))
    }

    /// Sum of every entry, as a `1×1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.unary(a, value, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum across each row: `m×n -> m×1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |r, _| t.row_slice(r).iter().sum());
        self.unary(a, value, Op::SumRows(a))
    }

    /// Sum down each column: `m×n -> 1×n`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(1, t.cols(), |_, c| (0..t.rows()).map(|r| t.get(r, c)).sum());
        self.unary(a, value, Op::SumCols(a))
    }

    /// Maximum down each column: `m×n -> 1×n`; ties go to the lowest row.
    pub fn max_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut arg = vec![0usize; t.cols()];
        for (c, best) in arg.iter_mut().enumerate() {
            for r in 1..t.rows() {
                if t.get(r, c) > t.get(*best, c) {
                    *best = r;
                }
            }
        }
        let value = Tensor::from_fn(1, t.cols(), |_, c| t.get(arg[c], c));
        self.unary(a, value, Op::MaxCols(a, arg))
    }

    /// Mean down each column: `m×n -> 1×n`.
    pub fn mean_cols(&mut self, a: Var) -> Var {
        let rows = self.shape(a)[0] as f64;
        let s = self.sum_cols(a);
        self.scale(s, 1.0 / rows)
    }

    /// Row-wise softmax of `scale * a`.
    pub fn softmax_rows(&mut self, a: Var, scale: f64) -> Result<Var> {
        let value = softmax_rows(self.value(a), scale)?;
        Ok(self.unary(a, value, Op::SoftmaxRows(a, scale)))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = log_softmax_rows(self.value(a))?;
        Ok(self.unary(a, value, Op::LogSoftmaxRows(a)))
    }

    pub fn select_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = cols.iter().find(|&&c| c >= t.cols()) {
            return Err(Error::shape("select_cols", t.shape(), [0, bad]));
        }
        let value = Tensor::from_fn(t.rows(), cols.len(), |r, c| t.get(r, cols[c]));
        Ok(self.unary(a, value, Op::SelectCols(a, cols.to_vec())))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= t.rows()) {
            return Err(Error::shape("select_rows", t.shape(), [bad, 0]));
        }
        let value = Tensor::from_fn(rows.len(), t.cols(), |r, c| t.get(rows[r], c));
        Ok(self.unary(a, value, Op::SelectRows(a, rows.to_vec())))
    }

    /// Stacks tensors of equal width on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::domain("concat_rows of an empty list"));
        };
        let cols = self.shape(*first)[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape("concat_rows", self.shape(*first), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(rows, cols, data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Dot product of each row of `a` with each row of `b`: `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let bt = self.transpose(b);
        self.matmul(a, bt)
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != [1, 1] {
            return Err(Error::shape("backward", self.shape(root), [1, 1]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(Tensor::scalar(1.0));
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.local_grads(i, &g)?;
            grads[i] = Some(g);
            for (v, dg) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&dg),
                    slot => *slot = Some(dg),
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let zip = |a: &Tensor, b: &Tensor, f: fn(f64, f64) -> f64| -> Tensor {
            broadcast_zip(a, b, a.shape(), f)
        };
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![
                (*a, reduce_to(g.clone(), val(*a).shape())),
                (*b, reduce_to(g.clone(), val(*b).shape())),
            ],
            Op::Sub(a, b) => vec![
                (*a, reduce_to(g.clone(), val(*a).shape())),
                (*b, reduce_to(g.map(|x| -x), val(*b).shape())),
            ],
            Op::Mul(a, b) => {
                let ga = broadcast_zip(g, val(*b), g.shape(), |x, y| x * y);
                let gb = broadcast_zip(g, val(*a), g.shape(), |x, y| x * y);
                vec![
                    (*a, reduce_to(ga, val(*a).shape())),
                    (*b, reduce_to(gb, val(*b).shape())),
                ]
            }
            Op::Div(a, b) => {
                let ga = broadcast_zip(g, val(*b), g.shape(), |x, y| x / y);
                // d(a/b)/db = -(a/b)/b
                let q = broadcast_zip(g, out, g.shape(), |x, y| x * y);
                let gb = broadcast_zip(&q, val(*b), g.shape(), |x, y| -x / y);
                vec![
                    (*a, reduce_to(ga, val(*a).shape())),
                    (*b, reduce_to(gb, val(*b).shape())),
                ]
            }
            Op::Scale(a, k) => vec![(*a, g.map(|x| k * x))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::MatMul(a, b) => {
                let ga = g.matmul(&val(*b).transpose())?;
                let gb = val(*a).transpose().matmul(g)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Exp(a) => vec![(*a, zip(g, out, |x, y| x * y))],
            Op::Ln(a) => vec![(*a, zip(g, val(*a), |x, y| x / y))],
            Op::Sqrt(a) => vec![(*a, zip(g, out, |x, y| 0.5 * x / y))],
            Op::Abs(a) => vec![(*a, zip(g, val(*a), |x, y| x * y.signum() * f64::from(y != 0.0)))],
            Op::Relu(a) => vec![(*a, zip(g, val(*a), |x, y| if y > 0.0 { x } else { 0.0 }))],
            Op::Softplus(a) => vec![(*a, zip(g, val(*a), |x, y| x * sigmoid(y)))],
            Op::Digamma(a) => {
                let d = try_map(val(*a), special::trigamma)?;
                vec![(*a, zip(g, &d, |x, y| x * y))]
            }
            Op::Lgamma(a) => {
                let d = try_map(val(*a), special::digamma)?;
                vec![(*a, zip(g, &d, |x, y| x * y))]
            }
            Op::ClampMin(a, floor) => {
                let floor = *floor;
                let x = val(*a);
                let d = Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    if x.get(r, c) > floor {
                        g.get(r, c)
                    } else {
                        0.0
                    }
                });
                vec![(*a, d)]
            }
            Op::SumAll(a) => {
                let [r, c] = val(*a).shape();
                vec![(*a, Tensor::full(r, c, g.item()))]
            }
            Op::SumRows(a) => {
                let [r, c] = val(*a).shape();
                vec![(*a, Tensor::from_fn(r, c, |i, _| g.get(i, 0)))]
            }
            Op::SumCols(a) => {
                let [r, c] = val(*a).shape();
                vec![(*a, Tensor::from_fn(r, c, |_, j| g.get(0, j)))]
            }
            Op::MaxCols(a, arg) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for (j, &i) in arg.iter().enumerate() {
                    d.set(i, j, g.get(0, j));
                }
                vec![(*a, d)]
            }
            Op::SoftmaxRows(a, scale) => {
                let mut d = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let dot: f64 = out.row_slice(r).iter().zip(g.row_slice(r)).map(|(y, gy)| y * gy).sum();
                    for c in 0..out.cols() {
                        d.set(r, c, scale * out.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                vec![(*a, d)]
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let total: f64 = g.row_slice(r).iter().sum();
                    for c in 0..out.cols() {
                        d.set(r, c, g.get(r, c) - out.get(r, c).exp() * total);
                    }
                }
                vec![(*a, d)]
            }
            Op::SelectCols(a, cols) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    for (j, &src) in cols.iter().enumerate() {
                        d.set(i, src, d.get(i, src) + g.get(i, j));
                    }
                }
                vec![(*a, d)]
            }
            Op::SelectRows(a, rows) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for (i, &src) in rows.iter().enumerate() {
                    for j in 0..c {
                        d.set(src, j, d.get(src, j) + g.get(i, j));
                    }
                }
                vec![(*a, d)]
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let n = val(p).rows();
                    out.push((p, g.slice_rows(start, start + n)));
                    start += n;
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_row() {
        let t = Tensor::row(&[0.0, 0.0, 0.0]);
        let s = softmax_rows(&t, 1.0).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let s = softmax_rows(&Tensor::row(&[1000.0, 0.0]), 1.0).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert!(s.get(0, 1) >= 0.0 && s.get(0, 1) < 1e-300);
    }

    #[test]
    fn softmax_log_weights() {
        let s = softmax_rows(&Tensor::row(&[1f64.ln(), 2f64.ln(), 3f64.ln()]), 1.0).unwrap();
        for (k, &v) in s.data().iter().enumerate() {
            assert!((v - (k + 1) as f64 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_nan_is_numeric_error() {
        let err = softmax_rows(&Tensor::row(&[f64::NAN, 1.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn broadcast_add_and_reduce() {
        let mut g = Graph::new();
        let a = g.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = g.param(Tensor::row(&[10.0, 20.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0, 22.0, 13.0, 24.0]);
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(g.grad(a).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn incompatible_broadcast_rejected() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(3, 2));
        assert!(matches!(g.mul(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn constants_get_no_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let k = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, k).unwrap();
        g.backward(y).unwrap();
        assert!(g.grad(k).is_none());
        assert_eq!(g.grad(x).unwrap().item(), 5.0);
    }

    #[test]
    fn backward_needs_scalar_root() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(2, 2));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn max_cols_routes_gradient_to_first_maximum() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, -1.0]]).unwrap());
        let m = g.max_cols(x);
        assert_eq!(g.value(m).data(), &[3.0, 5.0]);
        let w = g.constant(Tensor::row(&[2.0, 7.0]));
        let y = g.mul(m, w).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 7.0, 2.0, 0.0, 0.0, 0.0]);
    }
}
