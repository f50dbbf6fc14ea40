//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation of one forward pass; [`Graph::backward`]
//! then walks the record in reverse. Leaves created with `track = false`
//! are constants and receive no gradient.

use crate::tensor::{gemm, Matrix};

const LN_EPS: f64 = 1e-5;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Min(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Softplus(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    SumCols(usize),
    Mean(usize),
    MulCol(usize, usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    Rows(usize, Vec<usize>),
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<f64>, inv_std: Vec<f64> },
    SoftmaxRows(usize),
    Attention { q: usize, k: usize, v: usize, seq: usize, heads: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn unary(x: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    x.map(f)
}

fn binary(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Matrix { rows: a.rows, cols: a.cols, data: a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect() }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, ids: &[usize]) -> bool {
        ids.iter().any(|i| self.nodes[*i].tracked)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`Graph::backward`] target with respect to `v`;
    /// `None` if no gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&mut self, value: Matrix, track: bool) -> Var {
        self.push(value, Op::Leaf, track)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = Matrix::zeros(x.rows, y.cols);
        gemm(1.0, x, false, y, false, 0.0, &mut out);
        let t = self.tracked(&[a.0, b.0]);
        self.push(out, Op::MatMul(a.0, b.0), t)
    }

    /// Adds a `1×n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (m, r) = (&self.nodes[x.0].value, &self.nodes[row.0].value);
        assert_eq!((r.rows, r.cols), (1, m.cols), "bias shape");
        let mut out = m.clone();
        for i in 0..out.rows {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        let t = self.tracked(&[x.0, row.0]);
        self.push(out, Op::AddRow(x.0, row.0), t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = binary(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        let t = self.tracked(&[a.0, b.0]);
        self.push(out, Op::Add(a.0, b.0), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = binary(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        let t = self.tracked(&[a.0, b.0]);
        self.push(out, Op::Sub(a.0, b.0), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = binary(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        let t = self.tracked(&[a.0, b.0]);
        self.push(out, Op::Mul(a.0, b.0), t)
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let out = binary(&self.nodes[a.0].value, &self.nodes[b.0].value, f64::min);
        let t = self.tracked(&[a.0, b.0]);
        self.push(out, Op::Min(a.0, b.0), t)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = unary(&self.nodes[x.0].value, |v| v * s);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Scale(x.0, s), t)
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let out = unary(&self.nodes[x.0].value, |v| v + c);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Offset(x.0), t)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = unary(&self.nodes[x.0].value, |v| v.max(0.0));
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Relu(x.0), t)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = unary(&self.nodes[x.0].value, f64::tanh);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Tanh(x.0), t)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = unary(&self.nodes[x.0].value, f64::exp);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Exp(x.0), t)
    }

    /// `ln(1 + eˣ)`.
    pub fn softplus(&mut self, x: Var) -> Var {
        let out = unary(&self.nodes[x.0].value, softplus);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Softplus(x.0), t)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = unary(&self.nodes[x.0].value, |v| v * v);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Square(x.0), t)
    }

    /// Clamps into `[lo, hi]`; no gradient flows where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = unary(&self.nodes[x.0].value, |v| v.clamp(lo, hi));
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Clamp(x.0, lo, hi), t)
    }

    /// Row sums, `m×n → m×1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let m = &self.nodes[x.0].value;
        let out = Matrix::from_fn(m.rows, 1, |r, _| m.row(r).iter().sum());
        let t = self.tracked(&[x.0]);
        self.push(out, Op::SumCols(x.0), t)
    }

    /// Mean of all entries, `1×1`.
    pub fn mean(&mut self, x: Var) -> Var {
        let m = &self.nodes[x.0].value;
        let out = Matrix::filled(1, 1, m.data.iter().sum::<f64>() / m.len() as f64);
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Mean(x.0), t)
    }

    /// Scales row `i` of `x` by `col[i]`, with `col` of shape `m×1`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let (m, c) = (&self.nodes[x.0].value, &self.nodes[col.0].value);
        assert_eq!((c.rows, c.cols), (m.rows, 1), "column shape");
        let mut out = m.clone();
        for i in 0..out.rows {
            let s = c.data[i];
            out.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        let t = self.tracked(&[x.0, col.0]);
        self.push(out, Op::MulCol(x.0, col.0), t)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = &self.nodes[x.0].value;
        assert!(start + len <= m.cols, "column slice out of range");
        let out = Matrix::from_fn(m.rows, len, |r, c| m.get(r, start + c));
        let t = self.tracked(&[x.0]);
        self.push(out, Op::SliceCols(x.0, start), t)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0].0].value.rows;
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for p in parts {
                let m = &self.nodes[p.0].value;
                assert_eq!(m.rows, rows, "concat row mismatch");
                out.row_mut(r)[at..at + m.cols].copy_from_slice(m.row(r));
                at += m.cols;
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let t = self.tracked(&ids);
        self.push(out, Op::ConcatCols(ids), t)
    }

    /// Gathers the listed rows.
    pub fn rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let m = &self.nodes[x.0].value;
        let mut out = Matrix::zeros(idx.len(), m.cols);
        for (o, i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(m.row(*i));
        }
        let t = self.tracked(&[x.0]);
        self.push(out, Op::Rows(x.0, idx), t)
    }

    /// Row-wise layer normalization with `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (m, g, b) = (&self.nodes[x.0].value, &self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        let n = m.cols;
        let mut xhat = vec![0.0; m.len()];
        let mut inv_std = vec![0.0; m.rows];
        let mut out = Matrix::zeros(m.rows, n);
        for r in 0..m.rows {
            let row = m.row(r);
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..n {
                let h = (row[c] - mu) * inv;
                xhat[r * n + c] = h;
                out.data[r * n + c] = h * g.data[c] + b.data[c];
            }
        }
        let t = self.tracked(&[x.0, gamma.0, beta.0]);
        self.push(out, Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, xhat, inv_std }, t)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let m = &self.nodes[x.0].value;
        let mut out = m.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let t = self.tracked(&[x.0]);
        self.push(out, Op::SoftmaxRows(x.0), t)
    }

    /// Multi-head scaled dot-product self-attention without masking.
    /// `q`, `k`, `v` hold `batch·seq` rows (sequence-major within each
    /// batch entry) of width `d`, split into `heads` blocks of `d/heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq: usize, heads: usize) -> Var {
        let (qm, km, vm) = (&self.nodes[q.0].value, &self.nodes[k.0].value, &self.nodes[v.0].value);
        let d = qm.cols;
        assert!(d % heads == 0 && qm.rows % seq == 0, "attention shape");
        let dh = d / heads;
        let batch = qm.rows / seq;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut out = Matrix::zeros(qm.rows, d);
        let mut scores = vec![0.0; seq];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seq {
                    let qi = &qm.row(b * seq + i)[off..off + dh];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate() {
                        let kj = &km.row(b * seq + j)[off..off + dh];
                        *s = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                        max = max.max(*s);
                    }
                    let mut sum = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    let p = &mut probs[((b * heads + h) * seq + i) * seq..][..seq];
                    for (pj, s) in p.iter_mut().zip(&scores) {
                        *pj = s / sum;
                    }
                    let o = &mut out.data[(b * seq + i) * d + off..][..dh];
                    for (j, pj) in p.iter().enumerate() {
                        let vj = &vm.row(b * seq + j)[off..off + dh];
                        for (oc, vc) in o.iter_mut().zip(vj) {
                            *oc += pj * vc;
                        }
                    }
                }
            }
        }
        let t = self.tracked(&[q.0, k.0, v.0]);
        self.push(out, Op::Attention { q: q.0, k: k.0, v: v.0, seq, heads, probs }, t)
    }

    /// Back-propagates from the scalar `loss`. Gradients of earlier calls
    /// are discarded.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.nodes[loss.0].value.shape(), (1, 1), "loss must be a scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
    }

    fn accumulate(&mut self, target: usize, g: Matrix) {
        if !self.nodes[target].tracked {
            return;
        }
        match &mut self.grads[target] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, target: usize) -> bool {
        self.nodes[target].tracked
    }

    fn propagate(&mut self, i: usize, g: &Matrix) {
        let nodes = &self.nodes;
        let val = |j: usize| &nodes[j].value;
        let mut out: Vec<(usize, Matrix)> = Vec::with_capacity(3);
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let mut ga = Matrix::zeros(val(*a).rows, val(*a).cols);
                    gemm(1.0, g, false, val(*b), true, 0.0, &mut ga);
                    out.push((*a, ga));
                }
                if self.wants(*b) {
                    let mut gb = Matrix::zeros(val(*b).rows, val(*b).cols);
                    gemm(1.0, val(*a), true, g, false, 0.0, &mut gb);
                    out.push((*b, gb));
                }
            }
            Op::AddRow(x, row) => {
                if self.wants(*row) {
                    let mut gr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (a, b) in gr.data.iter_mut().zip(g.row(r)) {
                            *a += b;
                        }
                    }
                    out.push((*row, gr));
                }
                out.push((*x, g.clone()));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                if self.wants(*b) {
                    out.push((*b, g.map(|v| -v)));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    out.push((*a, binary(g, val(*b), |x, y| x * y)));
                }
                if self.wants(*b) {
                    out.push((*b, binary(g, val(*a), |x, y| x * y)));
                }
            }
            Op::Min(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mask = binary(va, vb, |x, y| if x <= y { 1.0 } else { 0.0 });
                if self.wants(*a) {
                    out.push((*a, binary(g, &mask, |x, m| x * m)));
                }
                if self.wants(*b) {
                    out.push((*b, binary(g, &mask, |x, m| x * (1.0 - m))));
                }
            }
            Op::Scale(x, s) => out.push((*x, g.map(|v| v * s))),
            Op::Offset(x) => out.push((*x, g.clone())),
            Op::Relu(x) => out.push((*x, binary(g, val(*x), |d, v| if v > 0.0 { d } else { 0.0 }))),
            Op::Tanh(x) => out.push((*x, binary(g, val(i), |d, y| d * (1.0 - y * y)))),
            Op::Exp(x) => out.push((*x, binary(g, val(i), |d, y| d * y))),
            Op::Softplus(x) => out.push((*x, binary(g, val(*x), |d, v| d * sigmoid(v)))),
            Op::Square(x) => out.push((*x, binary(g, val(*x), |d, v| 2.0 * d * v))),
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                out.push((*x, binary(g, val(*x), |d, v| if v >= lo && v <= hi { d } else { 0.0 })));
            }
            Op::SumCols(x) => {
                let m = val(*x);
                out.push((*x, Matrix::from_fn(m.rows, m.cols, |r, _| g.data[r])));
            }
            Op::Mean(x) => {
                let m = val(*x);
                out.push((*x, Matrix::filled(m.rows, m.cols, g.data[0] / m.len() as f64)));
            }
            Op::MulCol(x, col) => {
                let (m, c) = (val(*x), val(*col));
                if self.wants(*x) {
                    out.push((*x, Matrix::from_fn(m.rows, m.cols, |r, k| g.get(r, k) * c.data[r])));
                }
                if self.wants(*col) {
                    let gc = Matrix::from_fn(m.rows, 1, |r, _| g.row(r).iter().zip(m.row(r)).map(|(a, b)| a * b).sum());
                    out.push((*col, gc));
                }
            }
            Op::SliceCols(x, start) => {
                let m = val(*x);
                let mut gx = Matrix::zeros(m.rows, m.cols);
                for r in 0..g.rows {
                    gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                out.push((*x, gx));
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for p in parts {
                    let cols = val(*p).cols;
                    if self.wants(*p) {
                        out.push((*p, Matrix::from_fn(g.rows, cols, |r, c| g.get(r, at + c))));
                    }
                    at += cols;
                }
            }
            Op::Rows(x, idx) => {
                let m = val(*x);
                let mut gx = Matrix::zeros(m.rows, m.cols);
                for (o, src) in idx.iter().enumerate() {
                    for (a, b) in gx.row_mut(*src).iter_mut().zip(g.row(o)) {
                        *a += b;
                    }
                }
                out.push((*x, gx));
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let n = g.cols;
                let gam = val(*gamma);
                let mut gg = Matrix::zeros(1, n);
                let mut gb = Matrix::zeros(1, n);
                let mut gx = Matrix::zeros(g.rows, n);
                let mut dxhat = vec![0.0; n];
                for r in 0..g.rows {
                    let gr = g.row(r);
                    let xh = &xhat[r * n..(r + 1) * n];
                    for c in 0..n {
                        gb.data[c] += gr[c];
                        gg.data[c] += gr[c] * xh[c];
                        dxhat[c] = gr[c] * gam.data[c];
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                    let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    let row = gx.row_mut(r);
                    for c in 0..n {
                        row[c] = inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                    }
                }
                out.push((*x, gx));
                out.push((*gamma, gg));
                out.push((*beta, gb));
            }
            Op::SoftmaxRows(x) => {
                let p = val(i);
                let mut gx = Matrix::zeros(p.rows, p.cols);
                for r in 0..p.rows {
                    let dot: f64 = g.row(r).iter().zip(p.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, d), pv) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(p.row(r)) {
                        *o = pv * (d - dot);
                    }
                }
                out.push((*x, gx));
            }
            Op::Attention { q, k, v, seq, heads, probs } => {
                let (qm, km, vm) = (val(*q), val(*k), val(*v));
                let (seq, heads) = (*seq, *heads);
                let d = qm.cols;
                let dh = d / heads;
                let batch = qm.rows / seq;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut gq = Matrix::zeros(qm.rows, d);
                let mut gk = Matrix::zeros(qm.rows, d);
                let mut gv = Matrix::zeros(qm.rows, d);
                let mut dp = vec![0.0; seq];
                for b in 0..batch {
                    for h in 0..heads {
                        let off = h * dh;
                        for i in 0..seq {
                            let p = &probs[((b * heads + h) * seq + i) * seq..][..seq];
                            let go = &g.row(b * seq + i)[off..off + dh];
                            for j in 0..seq {
                                let vj = &vm.row(b * seq + j)[off..off + dh];
                                dp[j] = go.iter().zip(vj).map(|(x, y)| x * y).sum();
                                let gvj = &mut gv.row_mut(b * seq + j)[off..off + dh];
                                for (a, o) in gvj.iter_mut().zip(go) {
                                    *a += p[j] * o;
                                }
                            }
                            let dot: f64 = dp.iter().zip(p).map(|(a, b)| a * b).sum();
                            for j in 0..seq {
                                let ds = p[j] * (dp[j] - dot) * scale;
                                let kj = &km.row(b * seq + j)[off..off + dh];
                                let gqi = &mut gq.row_mut(b * seq + i)[off..off + dh];
                                for (a, kc) in gqi.iter_mut().zip(kj) {
                                    *a += ds * kc;
                                }
                                let qi = &qm.row(b * seq + i)[off..off + dh];
                                let gkj = &mut gk.row_mut(b * seq + j)[off..off + dh];
                                for (a, qc) in gkj.iter_mut().zip(qi) {
                                    *a += ds * qc;
                                }
                            }
                        }
                    }
                }
                out.push((*q, gq));
                out.push((*k, gk));
                out.push((*v, gv));
            }
        }
        for (target, grad) in out {
            self.accumulate(target, grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Checks `d loss / d input` for every entry of every input against
    /// central differences.
    fn check(inputs: Vec<Matrix>, f: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone(), true)).collect();
        let loss = f(&mut g, &vars);
        g.backward(loss);
        let eval = |ins: &[Matrix]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ins.iter().map(|m| g.leaf(m.clone(), true)).collect();
            let l = f(&mut g, &vars);
            g.value(l).scalar()
        };
        let h = 1e-6;
        for (n, m) in inputs.iter().enumerate() {
            let analytic = g.grad(vars[n]).cloned().unwrap_or_else(|| Matrix::zeros(m.rows, m.cols));
            for e in 0..m.len() {
                let mut plus = inputs.clone();
                plus[n].data[e] += h;
                let mut minus = inputs.clone();
                minus[n].data[e] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data[e];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "input {n} entry {e}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    /// Reduces any matrix to a scalar through a fixed random projection so
    /// that every output entry gets a distinct weight.
    fn project(g: &mut Graph, x: Var) -> Var {
        let m = g.value(x).clone();
        let w = Matrix::from_fn(m.rows, m.cols, |r, c| ((r * 7 + c * 3) % 11) as f64 / 11.0 - 0.4);
        let w = g.constant(w);
        let p = g.mul(x, w);
        g.mean(p)
    }

    #[test]
    fn elementwise_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(3, 4, &mut rng);
        let b = random(3, 4, &mut rng);
        check(vec![a.clone(), b.clone()], |g, v| {
            let s = g.add(v[0], v[1]);
            let d = g.sub(s, v[1]);
            let m = g.mul(d, v[1]);
            let t = g.tanh(m);
            let e = g.exp(t);
            let sp = g.softplus(e);
            let sq = g.square(sp);
            let sc = g.scale(sq, -1.5);
            let o = g.offset(sc, 2.0);
            let mn = g.min(o, v[0]);
            let c = g.clamp(mn, -0.5, 0.9);
            project(g, c)
        });
    }

    #[test]
    fn relu_away_from_kink() {
        let a = Matrix::from_vec(2, 2, vec![0.5, -0.3, 1.2, -2.0]);
        check(vec![a], |g, v| {
            let r = g.relu(v[0]);
            project(g, r)
        });
    }

    #[test]
    fn linear_algebra_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(4, 3, &mut rng);
        let w = random(3, 5, &mut rng);
        let b = random(1, 5, &mut rng);
        let c = random(4, 1, &mut rng);
        check(vec![x, w, b, c], |g, v| {
            let y = g.matmul(v[0], v[1]);
            let y = g.add_row(y, v[2]);
            let y = g.mul_col(y, v[3]);
            let left = g.slice_cols(y, 1, 3);
            let right = g.slice_cols(y, 0, 2);
            let cat = g.concat_cols(&[left, right, v[3]]);
            let picked = g.rows(cat, vec![3, 0, 3]);
            let s = g.sum_cols(picked);
            let sq = g.square(s);
            g.mean(sq)
        });
    }

    #[test]
    fn normalization_and_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(3, 6, &mut rng);
        let gamma = random(1, 6, &mut rng);
        let beta = random(1, 6, &mut rng);
        check(vec![x, gamma, beta], |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2]);
            let s = g.softmax_rows(y);
            project(g, s)
        });
    }

    #[test]
    fn attention_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (batch, seq, d) = (2, 3, 4);
        let q = random(batch * seq, d, &mut rng);
        let k = random(batch * seq, d, &mut rng);
        let v = random(batch * seq, d, &mut rng);
        check(vec![q, k, v], |g, x| {
            let a = g.attention(x[0], x[1], x[2], seq, 2);
            project(g, a)
        });
    }

    #[test]
    fn attention_single_key_copies_value() {
        let mut g = Graph::new();
        let q = g.constant(Matrix::from_vec(1, 2, vec![3.0, -1.0]));
        let v = g.constant(Matrix::from_vec(1, 2, vec![0.25, 7.0]));
        let out = g.attention(q, q, v, 1, 1);
        assert_eq!(g.value(out).data, vec![0.25, 7.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Matrix::filled(1, 1, 2.0), true);
        let c = g.constant(Matrix::filled(1, 1, 3.0));
        let p = g.mul(a, c);
        g.backward(p);
        assert_eq!(g.grad(a).unwrap().data, vec![3.0]);
        assert!(g.grad(c).is_none());
    }
}
