//! Recording tape. Nodes are appended in evaluation order, which is a
//! topological order, so the backward sweep is a single reverse scan.

use std::rc::Rc;

use super::sinkhorn::{sinkhorn_plan, SinkhornPlan};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// Ratio that is defined as 0 wherever the denominator is exactly 0.
    RatioOrZero(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Log1p(Var),
    Square(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    Scale(Var, f64),
    AddScalar(Var),
    MulScalar(Var, Var),
    Sum(Var),
    /// Column sums, `1 x cols`.
    SumRows(Var),
    /// Row sums, `rows x 1`.
    SumCols(Var),
    /// Column extrema with the selected row per column.
    ColumnPick(Var, Vec<usize>),
    SegmentSum(Var, Rc<Vec<usize>>),
    Gather(Var, Rc<Vec<usize>>),
    Sinkhorn(Var, Var, Rc<SinkhornPlan>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::input(format!("{op}: incompatible shapes {a:?} and {b:?}"))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
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

    /// Elementwise division; any zero in the denominator is an error.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        if let Some(pos) = self.value(b).data().iter().position(|&d| d == 0.0) {
            return Err(Error::Numeric(format!("division by zero at flat index {pos}")));
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// `a / b` elementwise, with `0` wherever `b == 0`.
    pub fn ratio_or_zero(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("ratio_or_zero", a, b, |x, y| if y == 0.0 { 0.0 } else { x / y }, Op::RatioOrZero(a, b))
    }

    /// Concatenation along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::input("concat of nothing"))?;
        let rows = self.shape(first).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(shape_err("concat", self.shape(first), self.shape(bad)));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_vec(rows, cols, data)?, Op::Concat(parts.to_vec()), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// Natural log; nonpositive arguments are an error.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        if let Some(pos) = self.value(x).data().iter().position(|&v| v <= 0.0) {
            return Err(Error::Numeric(format!("log of nonpositive value at flat index {pos}")));
        }
        Ok(self.unary(x, f64::ln, Op::Ln(x)))
    }

    pub fn log1p(&mut self, x: Var) -> Result<Var> {
        if let Some(pos) = self.value(x).data().iter().position(|&v| v <= -1.0) {
            return Err(Error::Numeric(format!("log1p argument <= -1 at flat index {pos}")));
        }
        Ok(self.unary(x, f64::ln_1p, Op::Log1p(x)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    /// `c * x`.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| c * v, Op::Scale(x, c))
    }

    /// `x + c`.
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    /// `s * x` for a `1 x 1` tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(shape_err("mul_scalar", self.shape(x), self.shape(s)));
        }
        let c = self.value(s).item();
        let value = self.value(x).map(|v| c * v);
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(value, Op::MulScalar(x, s), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Column sums (`1 x cols`).
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, v) in out.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let value = Tensor::from_vec(1, t.cols(), out).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::SumRows(x), rg)
    }

    /// Column means (`1 x cols`).
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let n = self.shape(x).0.max(1) as f64;
        let s = self.sum_rows(x);
        self.scale(s, 1.0 / n)
    }

    /// Row sums (`rows x 1`).
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let value = Tensor::column(out);
        let rg = self.rg(x);
        self.push(value, Op::SumCols(x), rg)
    }

    fn column_pick(&mut self, x: Var, better: impl Fn(f64, f64) -> bool) -> Result<Var> {
        let t = self.value(x);
        if t.rows() == 0 {
            return Err(Error::input("column extremum of an empty tensor"));
        }
        let mut picks = vec![0usize; t.cols()];
        for c in 0..t.cols() {
            for r in 1..t.rows() {
                if better(t.get(r, c), t.get(picks[c], c)) {
                    picks[c] = r;
                }
            }
        }
        let value = Tensor::from_vec(1, t.cols(), picks.iter().enumerate().map(|(c, &r)| t.get(r, c)).collect())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::ColumnPick(x, picks), rg))
    }

    /// Column maxima (`1 x cols`); ties resolve to the first row.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        self.column_pick(x, |a, b| a > b)
    }

    /// Column minima (`1 x cols`); ties resolve to the first row.
    pub fn min_rows(&mut self, x: Var) -> Result<Var> {
        self.column_pick(x, |a, b| a < b)
    }

    /// Sums rows sharing a segment id: `out[ids[r]] += x[r]`.
    pub fn segment_sum(&mut self, x: Var, ids: Rc<Vec<usize>>, segments: usize) -> Result<Var> {
        let t = self.value(x);
        if ids.len() != t.rows() {
            return Err(Error::input(format!("segment_sum: {} ids for {} rows", ids.len(), t.rows())));
        }
        if let Some(&bad) = ids.iter().find(|&&s| s >= segments) {
            return Err(Error::input(format!("segment id {bad} >= {segments}")));
        }
        let cols = t.cols();
        let mut out = vec![0.0; segments * cols];
        for (r, &s) in ids.iter().enumerate() {
            for (o, v) in out[s * cols..(s + 1) * cols].iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let value = Tensor::from_vec(segments, cols, out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SegmentSum(x, ids), rg))
    }

    /// Row gather: `out[r] = x[idx[r]]`.
    pub fn gather(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let t = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&r| r >= t.rows()) {
            return Err(Error::input(format!("gather index {bad} >= {} rows", t.rows())));
        }
        let value = t.select_rows(&idx);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Gather(x, idx), rg))
    }

    /// Entropic optimal-transport cost between the row sets of `x` and `y`
    /// (uniform weights, squared Euclidean ground cost) after exactly
    /// `iters` Sinkhorn iterations; the gradient differentiates those
    /// iterations.
    pub fn sinkhorn_cost(&mut self, x: Var, y: Var, eps: f64, iters: usize) -> Result<Var> {
        let (sx, sy) = (self.shape(x), self.shape(y));
        if sx.1 != sy.1 || sx.0 == 0 || sy.0 == 0 {
            return Err(shape_err("sinkhorn_cost", sx, sy));
        }
        let plan = sinkhorn_plan(self.value(x), self.value(y), eps, iters)?;
        let value = Tensor::scalar(plan.cost);
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(value, Op::Sinkhorn(x, y, Rc::new(plan)), rg))
    }

    /// Smallest distance of any recorded non-smooth input (relu, abs,
    /// clamp bounds) from its kink. Used to reject finite-difference
    /// probes that would straddle a kink.
    pub fn min_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            let (x, kinks): (Var, &[f64]) = match &node.op {
                Op::Relu(x) | Op::Abs(x) => (*x, &[0.0]),
                Op::Clamp(x, lo, hi) => {
                    let v = self.value(*x);
                    for &d in v.data() {
                        best = best.min((d - lo).abs()).min((d - hi).abs());
                    }
                    continue;
                }
                _ => continue,
            };
            if !self.rg(x) {
                continue;
            }
            for &d in self.value(x).data() {
                for k in kinks {
                    best = best.min((d - k).abs());
                }
            }
        }
        best
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::input(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape()).collect() })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, contrib: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.value(v);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_nt(val(*b)));
                }
                if self.rg(*b) {
                    acc(*b, val(*a).matmul_tn(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |g, y| g * y));
                acc(*b, g.zip_map(val(*a), |g, x| g * x));
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                acc(*a, g.zip_map(bv, |g, y| g / y));
                let q = node.value.zip_map(bv, |q, y| q / y);
                acc(*b, g.zip_map(&q, |g, q| -g * q));
            }
            Op::RatioOrZero(a, b) => {
                let bv = val(*b);
                acc(*a, g.zip_map(bv, |g, y| if y == 0.0 { 0.0 } else { g / y }));
                let q = node.value.zip_map(bv, |q, y| if y == 0.0 { 0.0 } else { q / y });
                acc(*b, g.zip_map(&q, |g, q| -g * q));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                let rows = g.rows();
                for &p in parts {
                    let w = self.shape(p).1;
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(p, Tensor::from_vec(rows, w, data).unwrap());
                    }
                    offset += w;
                }
            }
            Op::Relu(x) => acc(*x, g.zip_map(val(*x), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::Sigmoid(x) => acc(*x, g.zip_map(&node.value, |g, s| g * s * (1.0 - s))),
            Op::Exp(x) => acc(*x, g.zip_map(&node.value, |g, e| g * e)),
            Op::Ln(x) => acc(*x, g.zip_map(val(*x), |g, x| g / x)),
            Op::Log1p(x) => acc(*x, g.zip_map(val(*x), |g, x| g / (1.0 + x))),
            Op::Square(x) => acc(*x, g.zip_map(val(*x), |g, x| 2.0 * g * x)),
            Op::Abs(x) => acc(*x, g.zip_map(val(*x), |g, x| if x > 0.0 { g } else if x < 0.0 { -g } else { 0.0 })),
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(*x, g.zip_map(val(*x), |g, x| if x >= lo && x <= hi { g } else { 0.0 }))
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| c * v)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::MulScalar(x, s) => {
                let c = val(*s).item();
                acc(*x, g.map(|v| c * v));
                if self.rg(*s) {
                    let dot = g.data().iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                    acc(*s, Tensor::scalar(dot));
                }
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                acc(*x, Tensor::filled(r, c, g.item()));
            }
            Op::SumRows(x) => {
                let (r, c) = self.shape(*x);
                let data = (0..r).flat_map(|_| g.data().iter().copied()).collect();
                acc(*x, Tensor::from_vec(r, c, data).unwrap());
            }
            Op::SumCols(x) => {
                let c = self.shape(*x).1;
                acc(*x, Tensor::tile_column(g.data(), c));
            }
            Op::ColumnPick(x, picks) => {
                let (r, c) = self.shape(*x);
                let mut out = Tensor::zeros(r, c);
                for (col, &row) in picks.iter().enumerate() {
                    out.data_mut()[row * c + col] += g.data()[col];
                }
                acc(*x, out);
            }
            Op::SegmentSum(x, ids) => acc(*x, g.select_rows(ids)),
            Op::Gather(x, idx) => {
                let (r, c) = self.shape(*x);
                let mut out = Tensor::zeros(r, c);
                for (k, &src) in idx.iter().enumerate() {
                    for (o, v) in out.data_mut()[src * c..(src + 1) * c].iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                acc(*x, out);
            }
            Op::Sinkhorn(x, y, plan) => {
                let (gx, gy) = plan.cost_gradients(val(*x), val(*y));
                let s = g.item();
                acc(*x, gx.map(|v| s * v));
                acc(*y, gy.map(|v| s * v));
            }
        }
    }
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Tensor::zeros(r, c)
        })
    }
}
