use std::borrow::Cow;

use super::kernels::{self, axpy, dot};
use super::NumericArray;
use crate::error::{shape_err, validation_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Which way a vector operand is repeated across a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Along {
    /// `b` has one entry per column and is repeated for every row.
    Rows,
    /// `b` has one entry per row and is repeated for every column.
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    BcastAdd(Var, Var, Along),
    BcastMul(Var, Var, Along),
    Concat(Vec<Var>, usize),
    Slice { a: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
    Gelu(Var),
    Softmax { a: Var, lanes: Lanes },
    LayerNorm { x: Var, gain: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    MeanPool { a: Var, lanes: Lanes },
    CrossEntropy { logits: Var, class: usize, probs: Vec<f64> },
    Sum(Var),
}

/// Iteration geometry for reducing one axis of an n-d array.
#[derive(Debug, Clone, Copy)]
struct Lanes {
    outer: usize,
    len: usize,
    inner: usize,
}

impl Lanes {
    fn new(shape: &[usize], axis: usize) -> Result<Self> {
        if axis >= shape.len() {
            return Err(shape_err!("axis {axis} out of range for shape {shape:?}"));
        }
        Ok(Lanes {
            outer: shape[..axis].iter().product(),
            len: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        })
    }

    /// Base offset of each lane; elements are `base + j * inner`.
    fn bases(self) -> impl Iterator<Item = usize> {
        (0..self.outer).flat_map(move |o| (0..self.inner).map(move |i| o * self.len * self.inner + i))
    }
}

struct Node<'p> {
    shape: Vec<usize>,
    value: Cow<'p, [f64]>,
    op: Op,
    tracked: bool,
}

/// Operation tape for reverse-mode differentiation.
///
/// Every primitive appends a node holding its forward value. Leaves created
/// with [`Tape::leaf`] or [`Tape::param`] are tracked; [`Tape::backward`]
/// walks the tape in reverse and accumulates `∂loss/∂leaf` into per-leaf
/// gradient buffers. Calling `backward` again without [`Tape::zero_grad`]
/// adds to the existing gradients.
///
/// `'p` lets parameter leaves borrow their storage instead of copying it.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'p, [f64]>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            tracked,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.push(shape, Cow::Owned(value), op, tracked)
    }

    /// Tracked leaf owning its data.
    pub fn leaf(&mut self, a: NumericArray) -> Var {
        let shape = a.shape().to_vec();
        self.push(shape, Cow::Owned(a.into_data()), Op::Leaf, true)
    }

    /// Tracked leaf borrowing the parameter's storage.
    pub fn param(&mut self, a: &'p NumericArray) -> Var {
        self.push(a.shape().to_vec(), Cow::Borrowed(a.data()), Op::Leaf, true)
    }

    /// Untracked input; no gradient flows into it.
    pub fn constant(&mut self, a: NumericArray) -> Var {
        let shape = a.shape().to_vec();
        self.push(shape, Cow::Owned(a.into_data()), Op::Leaf, false)
    }

    /// Untracked copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let (shape, value) = (n.shape.clone(), n.value.to_vec());
        self.push(shape, Cow::Owned(value), Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn array(&self, v: Var) -> NumericArray {
        let n = &self.nodes[v.0];
        NumericArray::new(n.shape.clone(), n.value.to_vec()).expect("node shape")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Accumulated gradient of a tracked leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(shape_err!("expected a matrix, got shape {s:?}")),
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(shape_err!("matmul [{m},{k}] x [{k2},{n}]"));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push_op(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push_op(self.shape(a).to_vec(), out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        self.push_op(self.shape(a).to_vec(), out, Op::Scale(a, c), &[a])
    }

    fn bcast_check(&self, a: Var, b: Var, along: Along) -> Result<(usize, usize)> {
        let (m, n) = self.dims2(a)?;
        let want = match along {
            Along::Rows => n,
            Along::Cols => m,
        };
        if self.nodes[b.0].value.len() != want || self.shape(b).len() != 1 {
            return Err(shape_err!(
                "broadcast {:?} over [{m},{n}] along {along:?} needs a [{want}] vector",
                self.shape(b)
            ));
        }
        Ok((m, n))
    }

    fn bcast(&mut self, a: Var, b: Var, along: Along, mul: bool) -> Result<Var> {
        let (m, n) = self.bcast_check(a, b, along)?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = av.to_vec();
        for i in 0..m {
            for j in 0..n {
                let bb = match along {
                    Along::Rows => bv[j],
                    Along::Cols => bv[i],
                };
                let o = &mut out[i * n + j];
                if mul {
                    *o *= bb
                } else {
                    *o += bb
                }
            }
        }
        let op = if mul {
            Op::BcastMul(a, b, along)
        } else {
            Op::BcastAdd(a, b, along)
        };
        Ok(self.push_op(vec![m, n], out, op, &[a, b]))
    }

    /// `a[m,n] + b` with the vector `b` repeated along `along`.
    pub fn add_broadcast(&mut self, a: Var, b: Var, along: Along) -> Result<Var> {
        self.bcast(a, b, along, false)
    }

    pub fn mul_broadcast(&mut self, a: Var, b: Var, along: Along) -> Result<Var> {
        self.bcast(a, b, along, true)
    }

    /// Concatenates matrices along axis 0 (stack rows) or 1 (join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(shape_err!("concat needs parts and axis 0 or 1"));
        }
        let dims = parts.iter().map(|&p| self.dims2(p)).collect::<Result<Vec<_>>>()?;
        let (r0, c0) = dims[0];
        let (rows, cols) = if axis == 0 {
            if dims.iter().any(|d| d.1 != c0) {
                return Err(shape_err!("concat rows: column counts differ {dims:?}"));
            }
            (dims.iter().map(|d| d.0).sum(), c0)
        } else {
            if dims.iter().any(|d| d.0 != r0) {
                return Err(shape_err!("concat cols: row counts differ {dims:?}"));
            }
            (r0, dims.iter().map(|d| d.1).sum())
        };
        let mut out = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                out.extend_from_slice(self.value(p));
            }
        } else {
            for i in 0..rows {
                for (&p, &(_, c)) in parts.iter().zip(&dims) {
                    out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
                }
            }
        }
        Ok(self.push_op(vec![rows, cols], out, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// Rows or columns `start..end` of a matrix.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims2(a)?;
        let lim = if axis == 0 { m } else { n };
        if axis > 1 || start >= end || end > lim {
            return Err(shape_err!("slice {start}..{end} on axis {axis} of [{m},{n}]"));
        }
        let v = self.value(a);
        let (shape, out) = if axis == 0 {
            (vec![end - start, n], v[start * n..end * n].to_vec())
        } else {
            let w = end - start;
            let mut out = Vec::with_capacity(m * w);
            for i in 0..m {
                out.extend_from_slice(&v[i * n + start..i * n + end]);
            }
            (vec![m, w], out)
        };
        Ok(self.push_op(shape, out, Op::Slice { a, axis, start }, &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims2(a)?;
        let v = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        Ok(self.push_op(vec![n, m], out, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(shape_err!("cannot reshape {:?} to {shape:?}", self.shape(a)));
        }
        let out = self.value(a).to_vec();
        Ok(self.push_op(shape.to_vec(), out, Op::Reshape(a), &[a]))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| kernels::gelu(x)).collect();
        self.push_op(self.shape(a).to_vec(), out, Op::Gelu(a), &[a])
    }

    /// Softmax along `axis`, stabilized by subtracting the lane maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let lanes = Lanes::new(self.shape(a), axis)?;
        let src = self.value(a);
        let mut out = vec![0.0; src.len()];
        for base in lanes.bases() {
            kernels::softmax_lane(src, &mut out, base, lanes.len, lanes.inner);
        }
        Ok(self.push_op(self.shape(a).to_vec(), out, Op::Softmax { a, lanes }, &[a]))
    }

    /// Layer normalization over the last axis with a multiplicative gain and
    /// no additive term: `(x - mean) / sqrt(var + 1e-5) * gain`.
    pub fn layernorm_nobias(&mut self, x: Var, gain: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| shape_err!("layernorm of a scalar"))?;
        if self.shape(gain) != [n] {
            return Err(shape_err!("layernorm gain {:?} for width {n}", self.shape(gain)));
        }
        let (xv, gv) = (self.value(x), self.value(gain));
        let rows = xv.len() / n;
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gv[j];
            }
        }
        let op = Op::LayerNorm {
            x,
            gain,
            xhat,
            inv_std,
        };
        Ok(self.push_op(shape, out, op, &[x, gain]))
    }

    /// Gathers rows of `table[V, D]`; the result is `[ids.len(), D]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims2(table)?;
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(validation_err!("embedding id {bad} outside table of {v} rows"));
        }
        if ids.is_empty() {
            return Err(shape_err!("embedding lookup with no ids"));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let op = Op::Embedding {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push_op(vec![ids.len(), d], out, op, &[table]))
    }

    /// Mean over `axis`; the axis is removed from the shape.
    pub fn mean_pool(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let lanes = Lanes::new(&shape, axis)?;
        let v = self.value(a);
        let mut out = vec![0.0; lanes.outer * lanes.inner];
        for (o, base) in lanes.bases().enumerate() {
            let s: f64 = (0..lanes.len).map(|j| v[base + j * lanes.inner]).sum();
            out[o] = s / lanes.len as f64;
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok(self.push_op(out_shape, out, Op::MeanPool { a, lanes }, &[a]))
    }

    /// `-log softmax(logits)[class]` for a single logit vector.
    pub fn cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var> {
        let shape = self.shape(logits);
        let c = match shape {
            [c] | [1, c] => *c,
            s => return Err(shape_err!("cross_entropy expects one logit vector, got {s:?}")),
        };
        if class >= c {
            return Err(validation_err!("class {class} out of range for {c} logits"));
        }
        let lv = self.value(logits);
        let lse = kernels::log_sum_exp(lv);
        let probs: Vec<f64> = lv.iter().map(|x| (x - lse).exp()).collect();
        let loss = lse - lv[class];
        let op = Op::CrossEntropy {
            logits,
            class,
            probs,
        };
        Ok(self.push_op(vec![], vec![loss], op, &[logits]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push_op(vec![], vec![s], Op::Sum(a), &[a])
    }

    /// Back-propagates from a scalar and accumulates into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got {:?}", self.shape(loss)));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let nodes = &self.nodes;
            let val = |v: Var| -> &[f64] { &nodes[v.0].value };
            let mut acc = Acc { nodes, adj: &mut adj };
            match &node.op {
                Op::Leaf => match &mut self.leaf_grads[i] {
                    Some(buf) => axpy(1.0, &g, buf),
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                    let n = nodes[b.0].shape[1];
                    acc.with(*a, |buf| kernels::matmul_bt_acc(&g, val(*b), buf, m, k, n));
                    acc.with(*b, |buf| kernels::matmul_at_acc(val(*a), &g, buf, m, k, n));
                }
                Op::Add(a, b) => {
                    acc.with(*a, |buf| axpy(1.0, &g, buf));
                    acc.with(*b, |buf| axpy(1.0, &g, buf));
                }
                Op::Sub(a, b) => {
                    acc.with(*a, |buf| axpy(1.0, &g, buf));
                    acc.with(*b, |buf| axpy(-1.0, &g, buf));
                }
                Op::Mul(a, b) => {
                    acc.with(*a, |buf| {
                        for ((o, gi), bi) in buf.iter_mut().zip(&g).zip(val(*b)) {
                            *o += gi * bi;
                        }
                    });
                    acc.with(*b, |buf| {
                        for ((o, gi), ai) in buf.iter_mut().zip(&g).zip(val(*a)) {
                            *o += gi * ai;
                        }
                    });
                }
                Op::Scale(a, c) => acc.with(*a, |buf| axpy(*c, &g, buf)),
                Op::BcastAdd(a, b, along) | Op::BcastMul(a, b, along) => {
                    let mul = matches!(node.op, Op::BcastMul(..));
                    let (m, n) = (node.shape[0], node.shape[1]);
                    let (av, bv) = (val(*a), val(*b));
                    let pick = |i: usize, j: usize| match along {
                        Along::Rows => j,
                        Along::Cols => i,
                    };
                    acc.with(*a, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                let scale = if mul { bv[pick(i, j)] } else { 1.0 };
                                buf[i * n + j] += g[i * n + j] * scale;
                            }
                        }
                    });
                    acc.with(*b, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                let scale = if mul { av[i * n + j] } else { 1.0 };
                                buf[pick(i, j)] += g[i * n + j] * scale;
                            }
                        }
                    });
                }
                Op::Concat(parts, axis) => {
                    let cols = node.shape[1];
                    let mut offset = 0;
                    for &p in parts {
                        let (pr, pc) = (nodes[p.0].shape[0], nodes[p.0].shape[1]);
                        acc.with(p, |buf| {
                            if *axis == 0 {
                                axpy(1.0, &g[offset * cols..(offset + pr) * cols], buf);
                            } else {
                                for r in 0..pr {
                                    let src = &g[r * cols + offset..r * cols + offset + pc];
                                    axpy(1.0, src, &mut buf[r * pc..(r + 1) * pc]);
                                }
                            }
                        });
                        offset += if *axis == 0 { pr } else { pc };
                    }
                }
                Op::Slice { a, axis, start } => {
                    let n = nodes[a.0].shape[1];
                    let (sr, sc) = (node.shape[0], node.shape[1]);
                    acc.with(*a, |buf| {
                        if *axis == 0 {
                            axpy(1.0, &g, &mut buf[start * n..(start + sr) * n]);
                        } else {
                            for r in 0..sr {
                                let dst = &mut buf[r * n + start..r * n + start + sc];
                                axpy(1.0, &g[r * sc..(r + 1) * sc], dst);
                            }
                        }
                    });
                }
                Op::Transpose(a) => {
                    let (m, n) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                    acc.with(*a, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                buf[i * n + j] += g[j * m + i];
                            }
                        }
                    });
                }
                Op::Reshape(a) => acc.with(*a, |buf| axpy(1.0, &g, buf)),
                Op::Gelu(a) => acc.with(*a, |buf| {
                    for ((o, gi), x) in buf.iter_mut().zip(&g).zip(val(*a)) {
                        *o += gi * kernels::gelu_grad(*x);
                    }
                }),
                Op::Softmax { a, lanes } => {
                    let y = &node.value;
                    acc.with(*a, |buf| {
                        for base in lanes.bases() {
                            let idx = |j: usize| base + j * lanes.inner;
                            let s: f64 = (0..lanes.len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                            for j in 0..lanes.len {
                                buf[idx(j)] += y[idx(j)] * (g[idx(j)] - s);
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gain,
                    xhat,
                    inv_std,
                } => {
                    let n = *node.shape.last().unwrap();
                    let gv = val(*gain);
                    acc.with(*gain, |buf| {
                        for (r, _) in inv_std.iter().enumerate() {
                            for j in 0..n {
                                buf[j] += g[r * n + j] * xhat[r * n + j];
                            }
                        }
                    });
                    acc.with(*x, |buf| {
                        let mut dxhat = vec![0.0; n];
                        for (r, &inv) in inv_std.iter().enumerate() {
                            let gr = &g[r * n..(r + 1) * n];
                            let hr = &xhat[r * n..(r + 1) * n];
                            for j in 0..n {
                                dxhat[j] = gr[j] * gv[j];
                            }
                            let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                            let mean_dh = dot(&dxhat, hr) / n as f64;
                            for j in 0..n {
                                buf[r * n + j] += inv * (dxhat[j] - mean_d - hr[j] * mean_dh);
                            }
                        }
                    });
                }
                Op::Embedding { table, ids } => {
                    let d = nodes[table.0].shape[1];
                    acc.with(*table, |buf| {
                        for (r, &id) in ids.iter().enumerate() {
                            axpy(1.0, &g[r * d..(r + 1) * d], &mut buf[id * d..(id + 1) * d]);
                        }
                    });
                }
                Op::MeanPool { a, lanes } => {
                    let inv = 1.0 / lanes.len as f64;
                    acc.with(*a, |buf| {
                        for (o, base) in lanes.bases().enumerate() {
                            for j in 0..lanes.len {
                                buf[base + j * lanes.inner] += g[o] * inv;
                            }
                        }
                    });
                }
                Op::CrossEntropy {
                    logits,
                    class,
                    probs,
                } => {
                    acc.with(*logits, |buf| {
                        for (j, p) in probs.iter().enumerate() {
                            let onehot = if j == *class { 1.0 } else { 0.0 };
                            buf[j] += g[0] * (p - onehot);
                        }
                    });
                }
                Op::Sum(a) => acc.with(*a, |buf| buf.iter_mut().for_each(|o| *o += g[0])),
            }
        }
        Ok(())
    }
}

/// Adjoint accumulator used during the reverse sweep.
struct Acc<'a, 'p> {
    nodes: &'a [Node<'p>],
    adj: &'a mut Vec<Option<Vec<f64>>>,
}

impl Acc<'_, '_> {
    fn with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[v.0];
        if !node.tracked {
            return;
        }
        let buf = self.adj[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(buf);
    }
}
