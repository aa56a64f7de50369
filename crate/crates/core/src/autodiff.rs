//! Minimal reverse-mode differentiation over dense row-major matrices.
//!
//! Operations are evaluated eagerly and recorded on a [`Graph`] tape;
//! [`Graph::backward`] walks the tape in reverse and accumulates
//! vector-Jacobian products. Everything is generic over [`Real`] so the same
//! model code runs in `f32` for training and `f64` for oracle and
//! finite-difference checks.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};

pub trait Real: Float + FromPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub fn lit<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

const LN_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-12;
const GELU_A: f64 = 1.702;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(rows * cols, data.len(), "Mat::from_vec shape");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<F>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn scalar(x: F) -> Self {
        Self { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, b.rows, "matmul {:?} x {:?}", self.shape(), b.shape());
        let mut out = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == F::zero() {
                    continue;
                }
                let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    /// `self · bᵀ`
    pub fn matmul_t(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, b.cols, "matmul_t {:?} x {:?}ᵀ", self.shape(), b.shape());
        Mat::from_fn(self.rows, b.rows, |i, j| {
            self.row(i).iter().zip(b.row(j)).map(|(&x, &y)| x * y).sum()
        })
    }

    /// `selfᵀ · b`
    pub fn t_matmul(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.rows, b.rows, "t_matmul {:?}ᵀ x {:?}", self.shape(), b.shape());
        let mut out = Mat::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let brow = b.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == F::zero() {
                    continue;
                }
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<F> {
        Mat::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Mat<F> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn add_assign(&mut self, other: &Mat<F>) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<G: Real>(&self) -> Mat<G> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::from_f64(x.to_f64().unwrap()).unwrap()).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, F),
    ScaleBy(Var, Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Mat<F>, inv_std: Vec<F> },
    Softmax(Var),
    QuickGelu(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    Cosine(Var, Var),
    CrossEntropy { logits: Var, target: usize, probs: Vec<F> },
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Mat<F>,
    op: Op<F>,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Grads<F> {
    grads: Vec<Option<Mat<F>>>,
}

impl<F: Real> Grads<F> {
    pub fn get(&self, v: Var) -> Option<&Mat<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Mat<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Mat<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Mat<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Add(a, b), ng)
    }

    /// Adds the `1×m` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        assert_eq!(bv.shape(), (1, xv.cols), "add_row bias shape");
        let v = Mat::from_fn(xv.rows, xv.cols, |r, c| xv.at(r, c) + bv.data[c]);
        let ng = self.ng(&[x, b]);
        self.push(v, Op::AddRow(x, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        let v = self.value(x).map(|e| e * s);
        let ng = self.ng(&[x]);
        self.push(v, Op::Scale(x, s), ng)
    }

    /// Multiplies `x` by the `1×1` variable `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.shape(s), (1, 1), "scale_by expects a scalar");
        let sv = self.value(s).data[0];
        let v = self.value(x).map(|e| e * sv);
        let ng = self.ng(&[x, s]);
        self.push(v, Op::ScaleBy(x, s), ng)
    }

    /// Row-wise layer normalization with `1×m` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        assert_eq!(self.value(gain).shape(), (1, m), "layer_norm gain shape");
        assert_eq!(self.value(bias).shape(), (1, m), "layer_norm bias shape");
        let eps: F = lit(LN_EPS);
        let mf: F = lit(m as f64);
        let mut xhat = Mat::zeros(n, m);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<F>() / mf;
            let var = row.iter().map(|&e| (e - mean) * (e - mean)).sum::<F>() / mf;
            let is = F::one() / (var + eps).sqrt();
            for c in 0..m {
                xhat.data[r * m + c] = (row[c] - mean) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let v = Mat::from_fn(n, m, |r, c| xhat.at(r, c) * g.data[c] + b.data[c]);
        let ng = self.ng(&[x, gain, bias]);
        self.push(v, Op::LayerNorm { x, gain, bias, xhat, inv_std }, ng)
    }

    /// Row-wise softmax; with `causal`, entries right of the diagonal are masked out.
    pub fn softmax_rows(&mut self, x: Var, causal: bool) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        let mut v = Mat::zeros(n, m);
        for r in 0..n {
            let upto = if causal { (r + 1).min(m) } else { m };
            let row = &xv.row(r)[..upto];
            let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for c in 0..upto {
                let e = (row[c] - mx).exp();
                v.data[r * m + c] = e;
                z += e;
            }
            for c in 0..upto {
                v.data[r * m + c] = v.data[r * m + c] / z;
            }
        }
        let ng = self.ng(&[x]);
        self.push(v, Op::Softmax(x), ng)
    }

    /// `x · σ(1.702 x)`
    pub fn quick_gelu(&mut self, x: Var) -> Var {
        let a: F = lit(GELU_A);
        let v = self.value(x).map(|e| e * sigmoid(a * e));
        let ng = self.ng(&[x]);
        self.push(v, Op::QuickGelu(x), ng)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.rows, "slice_rows out of range");
        let v = Mat::from_vec(len, xv.cols, xv.data[start * xv.cols..(start + len) * xv.cols].to_vec());
        let ng = self.ng(&[x]);
        self.push(v, Op::SliceRows(x, start), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice_cols out of range");
        let v = Mat::from_fn(xv.rows, len, |r, c| xv.at(r, start + c));
        let ng = self.ng(&[x]);
        self.push(v, Op::SliceCols(x, start), ng)
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Var {
        let cols = self.value(xs[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &x in xs {
            let v = self.value(x);
            assert_eq!(v.cols, cols, "concat_rows width");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        let ng = self.ng(xs);
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(xs.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        let rows = self.value(xs[0]).rows;
        let widths: Vec<usize> = xs.iter().map(|&x| self.value(x).cols).collect();
        let cols: usize = widths.iter().sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let xv = self.value(x);
            assert_eq!(xv.rows, rows, "concat_cols height");
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + w].copy_from_slice(xv.row(r));
            }
            off += w;
        }
        let ng = self.ng(xs);
        self.push(v, Op::ConcatCols(xs.to_vec()), ng)
    }

    /// Rows of `table` picked by `idx` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let tv = self.value(table);
        let mut data = Vec::with_capacity(idx.len() * tv.cols);
        for &i in idx {
            data.extend_from_slice(tv.row(i));
        }
        let v = Mat::from_vec(idx.len(), tv.cols, data);
        let ng = self.ng(&[table]);
        self.push(v, Op::GatherRows(table, idx.to_vec()), ng)
    }

    /// `n×m → 1×m` column means.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n: F = lit(xv.rows as f64);
        let v = Mat::from_fn(1, xv.cols, |_, c| (0..xv.rows).map(|r| xv.at(r, c)).sum::<F>() / n);
        let ng = self.ng(&[x]);
        self.push(v, Op::MeanRows(x), ng)
    }

    /// Cosine similarity of the `1×d` row `a` with each row of `b` (`k×d`), as `1×k`.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows, 1, "cosine expects a single query row");
        assert_eq!(av.cols, bv.cols, "cosine width");
        let na = norm(av.row(0));
        let v = Mat::from_fn(1, bv.rows, |_, j| {
            let nb = norm(bv.row(j));
            // rounding can land a hair outside [-1, 1] for (anti)parallel rows
            (dot(av.row(0), bv.row(j)) / (na * nb)).max(-F::one()).min(F::one())
        });
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Cosine(a, b), ng)
    }

    /// `−log softmax(logits)[target]` for `1×k` logits, as `1×1`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows, 1, "cross_entropy expects a single row");
        let mx = lv.data.iter().copied().fold(F::neg_infinity(), F::max);
        let z: F = lv.data.iter().map(|&x| (x - mx).exp()).sum();
        let probs: Vec<F> = lv.data.iter().map(|&x| (x - mx).exp() / z).collect();
        let loss = z.ln() + mx - lv.data[target];
        let ng = self.ng(&[logits]);
        self.push(Mat::scalar(loss), Op::CrossEntropy { logits, target, probs }, ng)
    }

    /// Every row-softmax output recorded so far (attention maps and class
    /// probabilities).
    pub fn softmax_outputs(&self) -> impl Iterator<Item = &Mat<F>> {
        self.nodes.iter().filter(|n| matches!(n.op, Op::Softmax(_))).map(|n| &n.value)
    }

    /// Reverse pass from the `1×1` node `loss`.
    pub fn backward(&self, loss: Var) -> Grads<F> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Mat<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::scalar(F::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let acc = |v: Var, d: Mat<F>, grads: &mut Vec<Option<Mat<F>>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&d),
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul_t(bv), &mut grads);
                    acc(*b, av.t_matmul(&g), &mut grads);
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul(bv), &mut grads);
                    acc(*b, g.t_matmul(av), &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::AddRow(x, b) => {
                    let db = col_sums(&g);
                    acc(*x, g, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    acc(*x, g.map(|e| e * s), &mut grads);
                }
                Op::ScaleBy(x, s) => {
                    let xv = self.value(*x);
                    let sv = self.value(*s).data[0];
                    let ds: F = g.data.iter().zip(&xv.data).map(|(&a, &b)| a * b).sum();
                    acc(*x, g.map(|e| e * sv), &mut grads);
                    acc(*s, Mat::scalar(ds), &mut grads);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let (n, m) = g.shape();
                    let mf: F = lit(m as f64);
                    let mut dgain = Mat::zeros(1, m);
                    let mut dbias = Mat::zeros(1, m);
                    let mut dx = Mat::zeros(n, m);
                    for r in 0..n {
                        let mut mean_d = F::zero();
                        let mut mean_dx = F::zero();
                        for c in 0..m {
                            let dy = g.at(r, c);
                            dgain.data[c] += dy * xhat.at(r, c);
                            dbias.data[c] += dy;
                            let dh = dy * gv.data[c];
                            mean_d += dh;
                            mean_dx += dh * xhat.at(r, c);
                        }
                        mean_d = mean_d / mf;
                        mean_dx = mean_dx / mf;
                        for c in 0..m {
                            let dh = g.at(r, c) * gv.data[c];
                            dx.data[r * m + c] = inv_std[r] * (dh - mean_d - xhat.at(r, c) * mean_dx);
                        }
                    }
                    acc(*x, dx, &mut grads);
                    acc(*gain, dgain, &mut grads);
                    acc(*bias, dbias, &mut grads);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let (n, m) = y.shape();
                    let mut dx = Mat::zeros(n, m);
                    for r in 0..n {
                        let s: F = (0..m).map(|c| g.at(r, c) * y.at(r, c)).sum();
                        for c in 0..m {
                            dx.data[r * m + c] = y.at(r, c) * (g.at(r, c) - s);
                        }
                    }
                    acc(*x, dx, &mut grads);
                }
                Op::QuickGelu(x) => {
                    let a: F = lit(GELU_A);
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    for (d, &e) in dx.data.iter_mut().zip(&xv.data) {
                        let s = sigmoid(a * e);
                        *d = *d * (s + a * e * s * (F::one() - s));
                    }
                    acc(*x, dx, &mut grads);
                }
                Op::SliceRows(x, start) => {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows, xv.cols);
                    let off = start * xv.cols;
                    dx.data[off..off + g.data.len()].copy_from_slice(&g.data);
                    acc(*x, dx, &mut grads);
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            dx.data[r * xv.cols + start + c] = g.at(r, c);
                        }
                    }
                    acc(*x, dx, &mut grads);
                }
                Op::ConcatRows(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let (r, c) = self.shape(x);
                        let d = Mat::from_vec(r, c, g.data[off..off + r * c].to_vec());
                        off += r * c;
                        acc(x, d, &mut grads);
                    }
                }
                Op::ConcatCols(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let (r, w) = self.shape(x);
                        let d = Mat::from_fn(r, w, |i, j| g.at(i, off + j));
                        off += w;
                        acc(x, d, &mut grads);
                    }
                }
                Op::GatherRows(table, idx) => {
                    let tv = self.value(*table);
                    let mut dt = Mat::zeros(tv.rows, tv.cols);
                    for (k, &i) in idx.iter().enumerate() {
                        for c in 0..tv.cols {
                            dt.data[i * tv.cols + c] += g.at(k, c);
                        }
                    }
                    acc(*table, dt, &mut grads);
                }
                Op::MeanRows(x) => {
                    let xv = self.value(*x);
                    let n: F = lit(xv.rows as f64);
                    let dx = Mat::from_fn(xv.rows, xv.cols, |_, c| g.data[c] / n);
                    acc(*x, dx, &mut grads);
                }
                Op::Cosine(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let arow = av.row(0);
                    let na = norm(arow);
                    let cosv = &node.value;
                    let mut da = Mat::zeros(1, av.cols);
                    let mut db = Mat::zeros(bv.rows, bv.cols);
                    for j in 0..bv.rows {
                        let brow = bv.row(j);
                        let nb = norm(brow);
                        let gj = g.data[j];
                        let cj = cosv.data[j];
                        for c in 0..av.cols {
                            da.data[c] += gj * (brow[c] / (na * nb) - cj * arow[c] / (na * na));
                            db.data[j * bv.cols + c] = gj * (arow[c] / (na * nb) - cj * brow[c] / (nb * nb));
                        }
                    }
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::CrossEntropy { logits, target, probs } => {
                    let gl = g.data[0];
                    let mut d = Mat::row_vector(probs.iter().map(|&p| p * gl).collect());
                    d.data[*target] = d.data[*target] - gl;
                    acc(*logits, d, &mut grads);
                }
            }
        }
        Grads { grads }
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<F: Real>(a: &[F]) -> F {
    dot(a, a).sqrt().max(lit(NORM_FLOOR))
}

fn col_sums<F: Real>(g: &Mat<F>) -> Mat<F> {
    let mut out = Mat::zeros(1, g.cols);
    for r in 0..g.rows {
        for c in 0..g.cols {
            out.data[c] += g.at(r, c);
        }
    }
    out
}
