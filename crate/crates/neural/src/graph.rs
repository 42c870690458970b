//! Reverse-mode tape. Each node stores its forward value; `backward` walks the
//! tape in reverse applying the per-op gradient rules written out below.

use crate::error::shape_err;
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};
use crate::Result;

pub type NodeId = usize;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    SliceCols(NodeId, usize, usize),
    Select0(NodeId, usize),
    StackRows(Vec<NodeId>),
    MeanRows(NodeId),
    Reshape(NodeId),
    MeanLast(NodeId),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        train: bool,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    aux: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn dims2<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => shape_err(format!("{what} expects a 2-D tensor, got {s:?}")),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> NodeId {
        self.push_aux(value, op, Vec::new())
    }

    fn push_aux(&mut self, value: Tensor<T>, op: Op, aux: Vec<Vec<T>>) -> NodeId {
        self.nodes.push(Node { value, op, aux });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: usize) -> NodeId {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    /// Batch mean and (biased) variance computed by a training-mode batch norm node.
    pub fn batch_stats(&self, bn: NodeId) -> Option<(&[T], &[T])> {
        match &self.nodes[bn].op {
            Op::BatchNorm { train: true, .. } => Some((&self.nodes[bn].aux[2], &self.nodes[bn].aux[3])),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return shape_err(format!("matmul [{m},{k}] x [{k2},{n}]"));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                let row = &bv[p * n..(p + 1) * n];
                for (o, &y) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o = *o + x * y;
                }
            }
        }
        Ok(self.push(Tensor::from_vec(&[m, n], out)?, Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(T, T) -> T) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape_err(format!(
                "elementwise op on {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let v = Tensor::from_vec(self.value(a).shape(), data)?;
        Ok(self.push(v, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` vector to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a), "add_row")?;
        if self.value(row).len() != n {
            return shape_err(format!("add_row: row of {} onto [{m},{n}]", self.value(row).len()));
        }
        let r = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x = *x + r[i % n];
        }
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(T) -> T) -> NodeId {
        let src = self.value(a);
        let v = Tensor::from_vec(src.shape(), src.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        self.push(v, op)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Sigmoid(a), |x| T::one() / (T::one() + (-x).exp()))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a), "softmax")?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                s = s + e;
            }
            for j in 0..n {
                out[i * n + j] = out[i * n + j] / s;
            }
        }
        Ok(self.push(Tensor::from_vec(&[m, n], out)?, Op::SoftmaxRows(a)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a), "transpose")?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(Tensor::from_vec(&[n, m], out)?, Op::Transpose(a)))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a), "slice_cols")?;
        if start >= end || end > n {
            return shape_err(format!("columns {start}..{end} of {n}"));
        }
        let src = self.value(a).data();
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        Ok(self.push(Tensor::from_vec(&[m, w], out)?, Op::SliceCols(a, start, end)))
    }

    /// Index `i` along the leading axis.
    pub fn select0(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        if shape.len() < 2 || i >= shape[0] {
            return shape_err(format!("select {i} from {shape:?}"));
        }
        let inner: usize = shape[1..].iter().product();
        let data = self.value(a).data()[i * inner..(i + 1) * inner].to_vec();
        Ok(self.push(Tensor::from_vec(&shape[1..], data)?, Op::Select0(a, i)))
    }

    /// Stacks equally sized nodes as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = rows.first() else {
            return shape_err("stack of zero rows");
        };
        let n = self.value(first).len();
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.value(r).len() != n {
                return shape_err("stack_rows: unequal row lengths");
            }
            out.extend_from_slice(self.value(r).data());
        }
        Ok(self.push(Tensor::from_vec(&[rows.len(), n], out)?, Op::StackRows(rows.to_vec())))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = dims2(self.value(a), "mean_rows")?;
        let src = self.value(a).data();
        let inv = T::one() / T::of(m as f64);
        let out = (0..n).map(|j| (0..m).map(|i| src[i * n + j]).sum::<T>() * inv).collect();
        Ok(self.push(Tensor::from_vec(&[1, n], out)?, Op::MeanRows(a)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Mean over the last axis.
    pub fn mean_last(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        if shape.len() < 2 {
            return shape_err("mean_last needs at least 2 axes");
        }
        let n = *shape.last().expect("non-empty");
        let inv = T::one() / T::of(n as f64);
        let out: Vec<T> = self.value(a).data().chunks(n).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        Ok(self.push(Tensor::from_vec(&shape[..shape.len() - 1], out)?, Op::MeanLast(a)))
    }

    /// Same-padded 1-D convolution: `x [B, Cin, N]`, `w [Cout, Cin, K]` (odd K), `b [Cout]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xs, ws) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        let (&[bsz, cin, n], &[cout, cin2, k]) = (&xs[..], &ws[..]) else {
            return shape_err(format!("conv1d x {xs:?}, w {ws:?}"));
        };
        if cin != cin2 || k % 2 == 0 || self.value(b).len() != cout {
            return shape_err(format!("conv1d x {xs:?}, w {ws:?}, b {:?}", self.value(b).shape()));
        }
        let r = (k / 2) as isize;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![T::zero(); bsz * cout * n];
        for bi in 0..bsz {
            for o in 0..cout {
                let orow = &mut out[(bi * cout + o) * n..(bi * cout + o + 1) * n];
                orow.iter_mut().for_each(|v| *v = bv[o]);
                for c in 0..cin {
                    let xrow = &xv[(bi * cin + c) * n..(bi * cin + c + 1) * n];
                    for kk in 0..k {
                        let wgt = wv[(o * cin + c) * k + kk];
                        let shift = kk as isize - r;
                        let t0 = (-shift).max(0) as usize;
                        let t1 = (n as isize - shift).min(n as isize).max(0) as usize;
                        for t in t0..t1 {
                            orow[t] = orow[t] + wgt * xrow[(t as isize + shift) as usize];
                        }
                    }
                }
            }
        }
        Ok(self.push(Tensor::from_vec(&[bsz, cout, n], out)?, Op::Conv1d { x, w, b }))
    }

    /// 2-D convolution: `x [B, Cin, H, W]`, `w [Cout, Cin, k, k]`, `b [Cout]`, zero padding.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let (xs, ws) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        let (&[bsz, cin, h, wd], &[cout, cin2, kh, kw]) = (&xs[..], &ws[..]) else {
            return shape_err(format!("conv2d x {xs:?}, w {ws:?}"));
        };
        if cin != cin2 || kh != kw || self.value(b).len() != cout || stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return shape_err(format!("conv2d x {xs:?}, w {ws:?}"));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![T::zero(); bsz * cout * ho * wo];
        for bi in 0..bsz {
            for o in 0..cout {
                let obase = (bi * cout + o) * ho * wo;
                for y in 0..ho {
                    for xx in 0..wo {
                        let mut acc = bv[o];
                        for c in 0..cin {
                            let xbase = (bi * cin + c) * h * wd;
                            let wbase = (o * cin + c) * kh * kw;
                            for i in 0..kh {
                                let iy = (y * stride + i) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for j in 0..kw {
                                    let ix = (xx * stride + j) as isize - pad as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    acc = acc + wv[wbase + i * kw + j] * xv[xbase + iy as usize * wd + ix as usize];
                                }
                            }
                        }
                        out[obase + y * wo + xx] = acc;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::from_vec(&[bsz, cout, ho, wo], out)?,
            Op::Conv2d { x, w, b, stride, pad },
        ))
    }

    /// Per-channel batch normalization of `x [B, C, N]`. In training mode the batch
    /// statistics are used; otherwise `running = (mean, var)` supplies them.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running: Option<(&[T], &[T])>,
    ) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let [bsz, c, n] = xs[..] else {
            return shape_err(format!("batch_norm expects [B, C, N], got {xs:?}"));
        };
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return shape_err("batch_norm affine parameters must have one entry per channel");
        }
        let xv = self.value(x).data();
        let eps = T::of(BN_EPS);
        let m = T::of((bsz * n) as f64);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        match running {
            Some((rm, rv)) => {
                if rm.len() != c || rv.len() != c {
                    return shape_err("running statistics must have one entry per channel");
                }
                mean.copy_from_slice(rm);
                var.copy_from_slice(rv);
            }
            None => {
                for ch in 0..c {
                    let mut s = T::zero();
                    for bi in 0..bsz {
                        s = s + xv[(bi * c + ch) * n..(bi * c + ch + 1) * n].iter().copied().sum::<T>();
                    }
                    mean[ch] = s / m;
                    let mut q = T::zero();
                    for bi in 0..bsz {
                        for &v in &xv[(bi * c + ch) * n..(bi * c + ch + 1) * n] {
                            q = q + (v - mean[ch]) * (v - mean[ch]);
                        }
                    }
                    var[ch] = q / m;
                }
            }
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for bi in 0..bsz {
            for ch in 0..c {
                for t in 0..n {
                    let i = (bi * c + ch) * n + t;
                    xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
                    out[i] = gv[ch] * xhat[i] + bv[ch];
                }
            }
        }
        let v = Tensor::from_vec(&xs, out)?;
        Ok(self.push_aux(
            v,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                train: running.is_none(),
            },
            vec![xhat, inv_std, mean, var],
        ))
    }

    /// Mean softmax cross-entropy of `logits [B, C]` against class targets.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (bsz, c) = dims2(self.value(logits), "cross_entropy")?;
        if targets.len() != bsz || targets.iter().any(|&t| t >= c) {
            return shape_err(format!("{} targets for logits [{bsz},{c}]", targets.len()));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); bsz * c];
        let mut loss = T::zero();
        for i in 0..bsz {
            let row = &lv[i * c..(i + 1) * c];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss = loss + lse - row[targets[i]];
        }
        let v = Tensor::scalar(loss / T::of(bsz as f64));
        Ok(self.push_aux(
            v,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            vec![probs],
        ))
    }

    /// Gradients of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Grads<T>> {
        if self.value(loss).len() != 1 {
            return shape_err("backward needs a scalar loss");
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn backprop_node(&self, id: NodeId, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[id];
        let gd = g.data();
        let mut acc = |target: NodeId, f: &mut dyn FnMut(&mut [T])| {
            let slot = grads[target].get_or_insert_with(|| Tensor::zeros(self.nodes[target].value.shape()));
            f(slot.data_mut());
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                let (ad, bd) = (av.data(), bv.data());
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s = s + gd[i * n + j] * bd[p * n + j];
                            }
                            ga[i * k + p] = ga[i * k + p] + s;
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = ad[i * k + p];
                            if x == T::zero() {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] = gb[p * n + j] + x * gd[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for t in [*a, *b] {
                    acc(t, &mut |ga| ga.iter_mut().zip(gd).for_each(|(x, &y)| *x = *x + y));
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(gd).for_each(|(x, &y)| *x = *x + y));
                let n = self.value(*row).len();
                acc(*row, &mut |gr| {
                    for (i, &v) in gd.iter().enumerate() {
                        gr[i % n] = gr[i % n] + v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] = ga[i] + gd[i] * bd[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] = gb[i] + gd[i] * ad[i];
                    }
                });
            }
            Op::Relu(a) => {
                let ad = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        if ad[i] > T::zero() {
                            ga[i] = ga[i] + gd[i];
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] = ga[i] + gd[i] * (T::one() - y[i] * y[i]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] = ga[i] + gd[i] * y[i] * (T::one() - y[i]);
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let n = node.value.shape()[1];
                acc(*a, &mut |ga| {
                    for (r, (yr, gr)) in y.chunks(n).zip(gd.chunks(n)).enumerate() {
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for j in 0..n {
                            ga[r * n + j] = ga[r * n + j] + yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] = ga[i * n + j] + gd[j * m + i];
                        }
                    }
                });
            }
            Op::SliceCols(a, start, end) => {
                let n = self.value(*a).shape()[1];
                let w = end - start;
                acc(*a, &mut |ga| {
                    for (i, chunk) in gd.chunks(w).enumerate() {
                        for (j, &v) in chunk.iter().enumerate() {
                            ga[i * n + start + j] = ga[i * n + start + j] + v;
                        }
                    }
                });
            }
            Op::Select0(a, i) => {
                let inner = gd.len();
                acc(*a, &mut |ga| {
                    for (x, &v) in ga[i * inner..(i + 1) * inner].iter_mut().zip(gd) {
                        *x = *x + v;
                    }
                });
            }
            Op::StackRows(rows) => {
                let n = node.value.shape()[1];
                for (r, &src) in rows.iter().enumerate() {
                    acc(src, &mut |gs| {
                        for (x, &v) in gs.iter_mut().zip(&gd[r * n..(r + 1) * n]) {
                            *x = *x + v;
                        }
                    });
                }
            }
            Op::MeanRows(a) => {
                let (m, n) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let inv = T::one() / T::of(m as f64);
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] = ga[i * n + j] + gd[j] * inv;
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(gd).for_each(|(x, &y)| *x = *x + y));
            }
            Op::MeanLast(a) => {
                let n = *self.value(*a).shape().last().expect("non-empty");
                let inv = T::one() / T::of(n as f64);
                acc(*a, &mut |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x = *x + gd[i / n] * inv;
                    }
                });
            }
            Op::Conv1d { x, w, b } => {
                let xs = self.value(*x).shape();
                let (bsz, cin, n) = (xs[0], xs[1], xs[2]);
                let ws = self.value(*w).shape();
                let (cout, k) = (ws[0], ws[2]);
                let r = (k / 2) as isize;
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                acc(*b, &mut |gb| {
                    for bi in 0..bsz {
                        for o in 0..cout {
                            gb[o] = gb[o] + gd[(bi * cout + o) * n..(bi * cout + o + 1) * n].iter().copied().sum::<T>();
                        }
                    }
                });
                let span = |shift: isize| {
                    let t0 = (-shift).max(0) as usize;
                    let t1 = (n as isize - shift).min(n as isize).max(0) as usize;
                    (t0, t1)
                };
                acc(*w, &mut |gw| {
                    for bi in 0..bsz {
                        for o in 0..cout {
                            let grow = &gd[(bi * cout + o) * n..(bi * cout + o + 1) * n];
                            for c in 0..cin {
                                let xrow = &xv[(bi * cin + c) * n..(bi * cin + c + 1) * n];
                                for kk in 0..k {
                                    let shift = kk as isize - r;
                                    let (t0, t1) = span(shift);
                                    let mut s = T::zero();
                                    for t in t0..t1 {
                                        s = s + grow[t] * xrow[(t as isize + shift) as usize];
                                    }
                                    let wi = (o * cin + c) * k + kk;
                                    gw[wi] = gw[wi] + s;
                                }
                            }
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for bi in 0..bsz {
                        for o in 0..cout {
                            let grow = &gd[(bi * cout + o) * n..(bi * cout + o + 1) * n];
                            for c in 0..cin {
                                let base = (bi * cin + c) * n;
                                for kk in 0..k {
                                    let wgt = wv[(o * cin + c) * k + kk];
                                    let shift = kk as isize - r;
                                    let (t0, t1) = span(shift);
                                    for t in t0..t1 {
                                        let xi = base + (t as isize + shift) as usize;
                                        gx[xi] = gx[xi] + wgt * grow[t];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xs = self.value(*x).shape();
                let (bsz, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let ws = self.value(*w).shape();
                let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
                let (ho, wo) = (node.value.shape()[2], node.value.shape()[3]);
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                let (stride, pad) = (*stride, *pad as isize);
                acc(*b, &mut |gb| {
                    for bi in 0..bsz {
                        for o in 0..cout {
                            let base = (bi * cout + o) * ho * wo;
                            gb[o] = gb[o] + gd[base..base + ho * wo].iter().copied().sum::<T>();
                        }
                    }
                });
                let mut gw_local = vec![T::zero(); wv.len()];
                let mut gx_local = vec![T::zero(); xv.len()];
                for bi in 0..bsz {
                    for o in 0..cout {
                        let obase = (bi * cout + o) * ho * wo;
                        for y in 0..ho {
                            for xx in 0..wo {
                                let gv = gd[obase + y * wo + xx];
                                if gv == T::zero() {
                                    continue;
                                }
                                for c in 0..cin {
                                    let xbase = (bi * cin + c) * h * wd;
                                    let wbase = (o * cin + c) * kh * kw;
                                    for i in 0..kh {
                                        let iy = (y * stride + i) as isize - pad;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for j in 0..kw {
                                            let ix = (xx * stride + j) as isize - pad;
                                            if ix < 0 || ix >= wd as isize {
                                                continue;
                                            }
                                            let xi = xbase + iy as usize * wd + ix as usize;
                                            let wi = wbase + i * kw + j;
                                            gw_local[wi] = gw_local[wi] + gv * xv[xi];
                                            gx_local[xi] = gx_local[xi] + gv * wv[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                acc(*w, &mut |gw| gw.iter_mut().zip(&gw_local).for_each(|(a, &v)| *a = *a + v));
                if !matches!(self.nodes[*x].op, Op::Leaf) {
                    acc(*x, &mut |gx| gx.iter_mut().zip(&gx_local).for_each(|(a, &v)| *a = *a + v));
                }
            }
            Op::BatchNorm { x, gamma, beta, train } => {
                let xs = self.value(*x).shape();
                let (bsz, c, n) = (xs[0], xs[1], xs[2]);
                let (xhat, inv_std) = (&node.aux[0], &node.aux[1]);
                let gv = self.value(*gamma).data();
                let m = T::of((bsz * n) as f64);
                let idx = |bi: usize, ch: usize, t: usize| (bi * c + ch) * n + t;
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for bi in 0..bsz {
                    for ch in 0..c {
                        for t in 0..n {
                            let i = idx(bi, ch, t);
                            sum_g[ch] = sum_g[ch] + gd[i];
                            sum_gx[ch] = sum_gx[ch] + gd[i] * xhat[i];
                        }
                    }
                }
                acc(*gamma, &mut |gg| gg.iter_mut().zip(&sum_gx).for_each(|(a, &v)| *a = *a + v));
                acc(*beta, &mut |gb| gb.iter_mut().zip(&sum_g).for_each(|(a, &v)| *a = *a + v));
                let train = *train;
                acc(*x, &mut |gx| {
                    for bi in 0..bsz {
                        for ch in 0..c {
                            for t in 0..n {
                                let i = idx(bi, ch, t);
                                let d = if train {
                                    // dxhat terms summed over the batch: Σ dy·γ and Σ dy·γ·xhat
                                    gv[ch] * inv_std[ch] / m * (m * gd[i] - sum_g[ch] - xhat[i] * sum_gx[ch])
                                } else {
                                    gv[ch] * inv_std[ch] * gd[i]
                                };
                                gx[i] = gx[i] + d;
                            }
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, targets } => {
                let probs = &node.aux[0];
                let c = self.value(*logits).shape()[1];
                let scale = gd[0] / T::of(targets.len() as f64);
                acc(*logits, &mut |gl| {
                    for (i, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { T::one() } else { T::zero() };
                            gl[i * c + j] = gl[i * c + j] + (probs[i * c + j] - onehot) * scale;
                        }
                    }
                });
            }
        }
    }
}

pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn node(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads[id].as_ref()
    }

    /// Gradients summed per parameter; parameters the loss never touched get zeros.
    pub fn params(&self, graph: &Graph<T>, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out = store.zeros_like();
        for (id, node) in graph.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, &self.grads[id]) {
                out[*p].add_assign(g);
            }
        }
        out
    }
}
