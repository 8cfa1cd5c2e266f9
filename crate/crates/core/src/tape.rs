//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends one node holding its output value and the inputs
//! it was computed from. Node indices only ever grow, so the tape is always
//! topologically ordered and [`Tape::backward`] is a single reverse sweep.

use crate::error::{Error, Result};
use crate::tensor::{lit, matmul_raw, transpose_raw, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op<T: Real> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    MulConst(usize, Vec<T>),
    Scale(usize, T),
    Gelu(usize),
    Softmax { x: usize, axis: usize },
    MaskedSoftmaxRows(usize),
    LogSoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gather { table: usize, ids: Vec<usize> },
    Rows { x: usize, idx: Vec<usize> },
    Cols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    StackRows(Vec<usize>),
    WeightedSumRows { x: usize, w: Vec<T> },
    Cosine { a: usize, b: usize, na: T, nb: T },
    NormalizeRows { x: usize, norms: Vec<T> },
    PickPerRow { x: usize, cols: Vec<usize> },
    Sum(usize),
    Mean(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records operations so gradients can be replayed backwards.
#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Tape { nodes: Vec::new() }
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let c = *shape.last().unwrap();
    (shape.iter().product::<usize>() / c, c)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Handles to dropped
    /// nodes become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        value.requires_grad = inputs.iter().any(|&i| self.nodes[i].value.requires_grad);
        value.grad = None;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf, keeping the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, mut t: Tensor<T>) -> Var {
        t.grad = None;
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_grad())
    }

    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Rows and columns of a rank-2 value.
    pub fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .ok_or_else(|| Error::dim(op, self.shape(v), &[0, 0]))
    }

    // ----- operations -----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_raw(self.data(a), self.data(b), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims2("transpose", a)?;
        let t = Tensor::new(vec![n, m], transpose_raw(self.data(a), m, n))?;
        Ok(self.push(t, Op::Transpose(a.0), &[a.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", self.shape(a), self.shape(b)));
        }
        let out: Vec<T> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    /// Adds a length-`n` vector to every row of `x[.., n]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = rows_cols(self.shape(x));
        if self.value(bias).numel() != c {
            return Err(Error::dim("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.data(bias);
        let out: Vec<T> = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % c])
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(t, Op::AddRow(x.0, bias.0), &[x.0, bias.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out: Vec<T> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    /// Elementwise product with a constant of the same length (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Vec<T>) -> Result<Var> {
        if c.len() != self.value(x).numel() {
            return Err(Error::dim("mul_const", self.shape(x), &[c.len()]));
        }
        let out: Vec<T> = self.data(x).iter().zip(&c).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(t, Op::MulConst(x.0, c), &[x.0]))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out: Vec<T> = self.data(x).iter().map(|&v| v * s).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        self.push(t, Op::Scale(x.0, s), &[x.0])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out: Vec<T> = self.data(x).iter().map(|&v| gelu(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        self.push(t, Op::Gelu(x.0), &[x.0])
    }

    /// Softmax along `axis`, stabilised by subtracting the running max.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Contract(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let out = softmax_axis(self.data(x), &shape, axis);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Softmax { x: x.0, axis }, &[x.0]))
    }

    /// Row softmax over the last axis where only columns with `keep[j]` take
    /// part. Dropped columns get exactly zero weight.
    pub fn masked_softmax_rows(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(x));
        if keep.len() != c {
            return Err(Error::dim("masked_softmax_rows", self.shape(x), &[keep.len()]));
        }
        let xs = self.data(x);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mx = row
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .fold(T::neg_infinity(), |m, (&v, _)| m.max(v));
            if mx == T::neg_infinity() {
                continue;
            }
            let mut s = T::zero();
            for j in 0..c {
                if keep[j] {
                    let e = (row[j] - mx).exp();
                    out[i * c + j] = e;
                    s = s + e;
                }
            }
            for j in 0..c {
                out[i * c + j] = out[i * c + j] / s;
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(t, Op::MaskedSoftmaxRows(x.0), &[x.0]))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = rows_cols(self.shape(x));
        let xs = self.data(x);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let s: T = row.iter().map(|&v| (v - mx).exp()).sum();
            let lse = mx + s.ln();
            for j in 0..c {
                out[i * c + j] = row[j] - lse;
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        self.push(t, Op::LogSoftmaxRows(x.0), &[x.0])
    }

    /// Normalises each row of `x[.., d]` to zero mean and unit variance, then
    /// applies `gain` and `bias`. Zero-variance rows map to `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, d) = rows_cols(self.shape(x));
        if self.value(gain).numel() != d || self.value(bias).numel() != d {
            return Err(Error::dim("layer_norm", self.shape(x), self.shape(gain)));
        }
        let eps: T = lit(LAYER_NORM_EPS);
        let dn: T = lit(d as f64);
        let xs = self.data(x);
        let (g, b) = (self.data(gain), self.data(bias));
        let mut xhat = vec![T::zero(); r * d];
        let mut inv_std = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * d];
        for i in 0..r {
            let row = &xs[i * d..(i + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[i * d + j] = h;
                out[i * d + j] = g[j] * h + b[j];
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                inv_std,
            },
            &[x.0, gain.0, bias.0],
        ))
    }

    /// Looks up rows of `table[V×d]`; out-of-range ids are a vocabulary error.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims2("gather", table)?;
        if ids.is_empty() {
            return Err(Error::Contract("gather needs at least one id".into()));
        }
        let src = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Vocabulary { id, size: v });
            }
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            t,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        ))
    }

    /// Selects rows of `x[m×d]` by index.
    pub fn rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (m, d) = self.dims2("rows", x)?;
        if idx.is_empty() {
            return Err(Error::Contract("rows needs at least one index".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::dim("rows", self.shape(x), &[bad]));
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let t = Tensor::new(vec![idx.len(), d], out)?;
        Ok(self.push(
            t,
            Op::Rows {
                x: x.0,
                idx: idx.to_vec(),
            },
            &[x.0],
        ))
    }

    /// Column block `[start, start + width)` of `x[m×n]`.
    pub fn cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.dims2("cols", x)?;
        if width == 0 || start + width > n {
            return Err(Error::dim("cols", self.shape(x), &[start, width]));
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + width]);
        }
        let t = Tensor::new(vec![m, width], out)?;
        Ok(self.push(t, Op::Cols { x: x.0, start }, &[x.0]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_cols needs at least one input".into()));
        };
        let (m, _) = self.dims2("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims2("concat_cols", p)?;
            if pm != m {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[i * w..(i + 1) * w]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::ConcatCols(ids.clone()), &ids))
    }

    /// Stacks equally-sized tensors as the rows of a matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("stack_rows needs at least one input".into()));
        };
        let d = self.value(first).numel();
        let mut out = Vec::with_capacity(parts.len() * d);
        for &p in parts {
            if self.value(p).numel() != d {
                return Err(Error::dim("stack_rows", self.shape(first), self.shape(p)));
            }
            out.extend_from_slice(self.data(p));
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let t = Tensor::new(vec![parts.len(), d], out)?;
        Ok(self.push(t, Op::StackRows(ids.clone()), &ids))
    }

    /// `Σᵢ w[i]·x[i, :]` for `x[n×d]`, giving a `[d]` vector.
    pub fn weighted_sum_rows(&mut self, x: Var, w: Vec<T>) -> Result<Var> {
        let (n, d) = self.dims2("weighted_sum_rows", x)?;
        if w.len() != n {
            return Err(Error::dim("weighted_sum_rows", self.shape(x), &[w.len()]));
        }
        let src = self.data(x);
        let mut out = vec![T::zero(); d];
        for (i, &wi) in w.iter().enumerate() {
            if wi == T::zero() {
                continue;
            }
            for j in 0..d {
                out[j] = out[j] + wi * src[i * d + j];
            }
        }
        let t = Tensor::new(vec![d], out)?;
        Ok(self.push(t, Op::WeightedSumRows { x: x.0, w }, &[x.0]))
    }

    /// Cosine similarity of two equal-length vectors, as a `[1]` tensor.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).numel() != self.value(b).numel() {
            return Err(Error::dim("cosine", self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.data(a), self.data(b));
        let na = crate::tensor::norm(av);
        let nb = crate::tensor::norm(bv);
        if na == T::zero() || nb == T::zero() {
            return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
        }
        let c = crate::tensor::dot(av, bv) / (na * nb);
        let t = Tensor::scalar(c);
        Ok(self.push(t, Op::Cosine { a: a.0, b: b.0, na, nb }, &[a.0, b.0]))
    }

    /// Scales each row of `x[.., d]` to unit L2 norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, d) = rows_cols(self.shape(x));
        let xs = self.data(x);
        let mut norms = Vec::with_capacity(r);
        let mut out = vec![T::zero(); r * d];
        for i in 0..r {
            let row = &xs[i * d..(i + 1) * d];
            let nr = crate::tensor::norm(row);
            if nr == T::zero() {
                return Err(Error::Degenerate(format!("row {i} has zero norm")));
            }
            for j in 0..d {
                out[i * d + j] = row[j] / nr;
            }
            norms.push(nr);
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(t, Op::NormalizeRows { x: x.0, norms }, &[x.0]))
    }

    /// Picks `x[i, cols[i]]` for every row, giving a `[m]` vector.
    pub fn pick_per_row(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.dims2("pick_per_row", x)?;
        if cols.len() != m || cols.iter().any(|&c| c >= n) {
            return Err(Error::dim("pick_per_row", self.shape(x), &[cols.len()]));
        }
        let src = self.data(x);
        let out: Vec<T> = cols.iter().enumerate().map(|(i, &c)| src[i * n + c]).collect();
        let t = Tensor::new(vec![m], out)?;
        Ok(self.push(
            t,
            Op::PickPerRow {
                x: x.0,
                cols: cols.to_vec(),
            },
            &[x.0],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.data(x).iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x.0), &[x.0])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n: T = lit(self.value(x).numel() as f64);
        let s: T = self.data(x).iter().copied().sum::<T>() / n;
        self.push(Tensor::scalar(s), Op::Mean(x.0), &[x.0])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x.0), &[x.0]))
    }

    // ----- backward -----

    /// Back-propagates from a scalar `loss`, filling `grad` on every node that
    /// requires it. Leaves that require grad but were not reached get zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.zero_grad();
        self.nodes[loss.0].value.grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.value.requires_grad {
                continue;
            }
            let Some(g) = node.value.grad.as_deref() else {
                continue;
            };
            for (target, delta) in local_grads(before, node, g) {
                let t = &mut before[target].value;
                if !t.requires_grad {
                    continue;
                }
                match &mut t.grad {
                    Some(acc) => {
                        for (a, d) in acc.iter_mut().zip(&delta) {
                            *a = *a + *d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        for n in &mut self.nodes {
            if n.value.requires_grad && matches!(n.op, Op::Leaf) && n.value.grad.is_none() {
                n.value.grad = Some(vec![T::zero(); n.value.numel()]);
            }
        }
        Ok(())
    }
}

fn gelu<T: Real>(x: T) -> T {
    let k: T = lit((2.0 / std::f64::consts::PI).sqrt());
    let c: T = lit(0.044715);
    let half: T = lit(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let k: T = lit((2.0 / std::f64::consts::PI).sqrt());
    let c: T = lit(0.044715);
    let half: T = lit(0.5);
    let three: T = lit(3.0);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + three * c * x * x)
}

fn softmax_axis<T: Real>(x: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * len + a) * inner + i;
            let mx = (0..len).fold(T::neg_infinity(), |m, a| m.max(x[at(a)]));
            let mut s = T::zero();
            for a in 0..len {
                let e = (x[at(a)] - mx).exp();
                out[at(a)] = e;
                s = s + e;
            }
            for a in 0..len {
                out[at(a)] = out[at(a)] / s;
            }
        }
    }
    out
}

/// Local vector-Jacobian products of `node` given its output gradient `g`.
fn local_grads<T: Real>(before: &[Node<T>], node: &Node<T>, g: &[T]) -> Vec<(usize, Vec<T>)> {
    let val = |i: usize| before[i].value.data();
    let shp = |i: usize| before[i].value.shape();
    let y = node.value.data();
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::MatMul(a, b) => {
            let (m, k) = (shp(*a)[0], shp(*a)[1]);
            let n = shp(*b)[1];
            let (av, bv) = (val(*a), val(*b));
            let mut da = vec![T::zero(); m * k];
            let mut db = vec![T::zero(); k * n];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let brow = &bv[p * n..(p + 1) * n];
                    da[i * k + p] = crate::tensor::dot(grow, brow);
                    let aip = av[i * k + p];
                    if aip != T::zero() {
                        let dbrow = &mut db[p * n..(p + 1) * n];
                        for (d, &gv) in dbrow.iter_mut().zip(grow) {
                            *d = *d + aip * gv;
                        }
                    }
                }
            }
            vec![(*a, da), (*b, db)]
        }
        Op::Transpose(a) => {
            let (m, n) = (shp(*a)[0], shp(*a)[1]);
            vec![(*a, transpose_raw(g, n, m))]
        }
        Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
        Op::AddRow(x, b) => {
            let c = val(*b).len();
            let mut db = vec![T::zero(); c];
            for (i, &gv) in g.iter().enumerate() {
                db[i % c] = db[i % c] + gv;
            }
            vec![(*x, g.to_vec()), (*b, db)]
        }
        Op::Mul(a, b) => {
            let da = g.iter().zip(val(*b)).map(|(&gv, &bv)| gv * bv).collect();
            let db = g.iter().zip(val(*a)).map(|(&gv, &av)| gv * av).collect();
            vec![(*a, da), (*b, db)]
        }
        Op::MulConst(x, c) => vec![(*x, g.iter().zip(c).map(|(&gv, &m)| gv * m).collect())],
        Op::Scale(x, s) => vec![(*x, g.iter().map(|&gv| gv * *s).collect())],
        Op::Gelu(x) => vec![(
            *x,
            g.iter()
                .zip(val(*x))
                .map(|(&gv, &xv)| gv * gelu_grad(xv))
                .collect(),
        )],
        Op::Softmax { x, axis } => {
            let shape = shp(*x);
            let len = shape[*axis];
            let inner: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..*axis].iter().product();
            let mut dx = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |a: usize| (o * len + a) * inner + i;
                    let s = (0..len).fold(T::zero(), |acc, a| acc + g[at(a)] * y[at(a)]);
                    for a in 0..len {
                        dx[at(a)] = y[at(a)] * (g[at(a)] - s);
                    }
                }
            }
            vec![(*x, dx)]
        }
        Op::MaskedSoftmaxRows(x) => {
            let (r, c) = rows_cols(shp(*x));
            let mut dx = vec![T::zero(); y.len()];
            for i in 0..r {
                let yr = &y[i * c..(i + 1) * c];
                let gr = &g[i * c..(i + 1) * c];
                let s = crate::tensor::dot(yr, gr);
                for j in 0..c {
                    dx[i * c + j] = yr[j] * (gr[j] - s);
                }
            }
            vec![(*x, dx)]
        }
        Op::LogSoftmaxRows(x) => {
            let (r, c) = rows_cols(shp(*x));
            let mut dx = vec![T::zero(); y.len()];
            for i in 0..r {
                let gs: T = g[i * c..(i + 1) * c].iter().copied().sum();
                for j in 0..c {
                    dx[i * c + j] = g[i * c + j] - y[i * c + j].exp() * gs;
                }
            }
            vec![(*x, dx)]
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let d = val(*gain).len();
            let r = inv_std.len();
            let gv = val(*gain);
            let dn: T = lit(d as f64);
            let mut dx = vec![T::zero(); r * d];
            let mut dg = vec![T::zero(); d];
            let mut db = vec![T::zero(); d];
            for i in 0..r {
                let gr = &g[i * d..(i + 1) * d];
                let hr = &xhat[i * d..(i + 1) * d];
                let mut sum_dh = T::zero();
                let mut sum_dh_h = T::zero();
                for j in 0..d {
                    let dh = gr[j] * gv[j];
                    sum_dh = sum_dh + dh;
                    sum_dh_h = sum_dh_h + dh * hr[j];
                    dg[j] = dg[j] + gr[j] * hr[j];
                    db[j] = db[j] + gr[j];
                }
                let k = inv_std[i] / dn;
                for j in 0..d {
                    let dh = gr[j] * gv[j];
                    dx[i * d + j] = k * (dn * dh - sum_dh - hr[j] * sum_dh_h);
                }
            }
            vec![(*x, dx), (*gain, dg), (*bias, db)]
        }
        Op::Gather { table, ids } => {
            let d = shp(*table)[1];
            let mut dt = vec![T::zero(); val(*table).len()];
            for (r, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    dt[id * d + j] = dt[id * d + j] + g[r * d + j];
                }
            }
            vec![(*table, dt)]
        }
        Op::Rows { x, idx } => {
            let d = shp(*x)[1];
            let mut dx = vec![T::zero(); val(*x).len()];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..d {
                    dx[i * d + j] = dx[i * d + j] + g[r * d + j];
                }
            }
            vec![(*x, dx)]
        }
        Op::Cols { x, start } => {
            let (m, n) = (shp(*x)[0], shp(*x)[1]);
            let w = node.value.shape()[1];
            let mut dx = vec![T::zero(); m * n];
            for i in 0..m {
                dx[i * n + start..i * n + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            vec![(*x, dx)]
        }
        Op::ConcatCols(parts) => {
            let m = node.value.shape()[0];
            let n = node.value.shape()[1];
            let mut off = 0;
            let mut out = Vec::with_capacity(parts.len());
            for &p in parts {
                let w = shp(p)[1];
                let mut dp = Vec::with_capacity(m * w);
                for i in 0..m {
                    dp.extend_from_slice(&g[i * n + off..i * n + off + w]);
                }
                off += w;
                out.push((p, dp));
            }
            out
        }
        Op::StackRows(parts) => {
            let d = node.value.shape()[1];
            parts
                .iter()
                .enumerate()
                .map(|(r, &p)| (p, g[r * d..(r + 1) * d].to_vec()))
                .collect()
        }
        Op::WeightedSumRows { x, w } => {
            let d = g.len();
            let mut dx = vec![T::zero(); w.len() * d];
            for (i, &wi) in w.iter().enumerate() {
                for j in 0..d {
                    dx[i * d + j] = wi * g[j];
                }
            }
            vec![(*x, dx)]
        }
        Op::Cosine { a, b, na, nb } => {
            let c = y[0];
            let (av, bv) = (val(*a), val(*b));
            let nab = *na * *nb;
            let da = av
                .iter()
                .zip(bv)
                .map(|(&x, &z)| g[0] * (z / nab - c * x / (*na * *na)))
                .collect();
            let db = av
                .iter()
                .zip(bv)
                .map(|(&x, &z)| g[0] * (x / nab - c * z / (*nb * *nb)))
                .collect();
            vec![(*a, da), (*b, db)]
        }
        Op::NormalizeRows { x, norms } => {
            let d = y.len() / norms.len();
            let mut dx = vec![T::zero(); y.len()];
            for (i, &nr) in norms.iter().enumerate() {
                let yr = &y[i * d..(i + 1) * d];
                let gr = &g[i * d..(i + 1) * d];
                let s = crate::tensor::dot(yr, gr);
                for j in 0..d {
                    dx[i * d + j] = (gr[j] - yr[j] * s) / nr;
                }
            }
            vec![(*x, dx)]
        }
        Op::PickPerRow { x, cols } => {
            let n = shp(*x)[1];
            let mut dx = vec![T::zero(); val(*x).len()];
            for (i, &c) in cols.iter().enumerate() {
                dx[i * n + c] = g[i];
            }
            vec![(*x, dx)]
        }
        Op::Sum(x) => vec![(*x, vec![g[0]; val(*x).len()])],
        Op::Mean(x) => {
            let n = val(*x).len();
            let v = g[0] / lit(n as f64);
            vec![(*x, vec![v; n])]
        }
        Op::Reshape(x) => vec![(*x, g.to_vec())],
    }
}
