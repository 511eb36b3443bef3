//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node appended after its inputs, so
//! node order is already a topological order and backward is a single reverse
//! sweep.

use crate::error::{dim_err, Result, TensorError};
use crate::tensor::{dot, gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddBias(usize, usize),
    ScaleGroups(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    MaxReduce { input: usize, sources: Vec<usize> },
    MeanReduce { input: usize, axis: usize },
    Sum(usize),
    GatherRows { input: usize, rows: Vec<usize> },
    Transpose(usize),
    SoftmaxRows(usize),
    LayerNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CrossEntropy { logits: usize, label: usize, probs: Vec<f64> },
    Reshape(usize),
    SliceCols { input: usize, start: usize, end: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of `len` when no gradient reached it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Splits `shape` around `axis` into (outer, extent, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

fn last_dim(t: &Tensor) -> (usize, usize) {
    let c = *t.shape().last().expect("tensors have rank >= 1");
    (t.numel() / c, c)
}

impl Graph {
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize], name: &'static str) -> Result<Var> {
        let value = value.check_finite(name)?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 {
            return dim_err("matmul", format!("{:?} x {:?}", ta.shape(), tb.shape()));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return dim_err("matmul", format!("inner extents {k} and {k2} differ"));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMul(a.0, b.0),
            &[a.0, b.0],
            "matmul",
        )
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), op, &[a.0, b.0], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Add(a.0, b.0), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Sub(a.0, b.0), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Mul(a.0, b.0), "mul", |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), op, &[a.0], name)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.map(a, Op::Scale(a.0, factor), "scale", |x| x * factor)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Relu(a.0), "relu", |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a.0), "sigmoid", |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    /// Adds a bias vector along the last axis of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (_, c) = last_dim(ta);
        if tb.numel() != c {
            return dim_err("add_bias", format!("bias of {} for last extent {c}", tb.numel()));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            for (x, &b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::AddBias(a.0, bias.0), &[a.0, bias.0], "add_bias")
    }

    /// `x[outer, mid, inner] * gate[outer, inner]`, broadcasting the gate over `mid`.
    pub fn scale_groups(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (tx, tg) = (self.value(x), self.value(gate));
        let (s, gs) = (tx.shape(), tg.shape());
        if s.len() != 3 || gs.len() != 2 || gs[0] != s[0] || gs[1] != s[2] {
            return dim_err("scale_groups", format!("{s:?} by {gs:?}"));
        }
        let (outer, mid, inner) = (s[0], s[1], s[2]);
        let mut data = tx.data().to_vec();
        for o in 0..outer {
            let g = &tg.data()[o * inner..(o + 1) * inner];
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                for (v, &gv) in data[base..base + inner].iter_mut().zip(g) {
                    *v *= gv;
                }
            }
        }
        let shape = s.to_vec();
        self.push(Tensor::from_parts(shape, data), Op::ScaleGroups(x.0, gate.0), &[x.0, gate.0], "scale_groups")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return dim_err("concat", "no inputs");
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return dim_err("concat", format!("axis {axis} for rank {}", base.len()));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return dim_err("concat", format!("{s:?} vs {base:?} on axis {axis}"));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let ids: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        self.push(
            Tensor::from_parts(shape, data),
            Op::Concat { inputs: ids.clone(), axis },
            &ids,
            "concat",
        )
    }

    /// Maximum along `axis`; ties resolve to the lowest index. Returns the
    /// values and, per output element, the winning position along `axis`.
    pub fn max_reduce(&mut self, a: Var, axis: usize) -> Result<(Var, Vec<usize>)> {
        let t = self.value(a);
        if axis >= t.rank() {
            return dim_err("max_reduce", format!("axis {axis} for rank {}", t.rank()));
        }
        let (outer, n, inner) = split_axis(t.shape(), axis);
        if n == 0 {
            return Err(TensorError::EmptyReduction { op: "max_reduce", axis });
        }
        let d = t.data();
        let mut values = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        let mut sources = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * n * inner;
            let mut best: Vec<f64> = d[base..base + inner].to_vec();
            let mut best_at = vec![0usize; inner];
            for k in 1..n {
                let row = &d[base + k * inner..base + (k + 1) * inner];
                for i in 0..inner {
                    if row[i] > best[i] {
                        best[i] = row[i];
                        best_at[i] = k;
                    }
                }
            }
            for i in 0..inner {
                sources.push(base + best_at[i] * inner + i);
            }
            values.extend(best);
            argmax.extend(best_at);
        }
        let shape = reduced_shape(t.shape(), axis);
        let v = self.push(
            Tensor::from_parts(shape, values),
            Op::MaxReduce { input: a.0, sources },
            &[a.0],
            "max_reduce",
        )?;
        Ok((v, argmax))
    }

    pub fn mean_reduce(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.rank() {
            return dim_err("mean_reduce", format!("axis {axis} for rank {}", t.rank()));
        }
        let (outer, n, inner) = split_axis(t.shape(), axis);
        let d = t.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let row = &d[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (acc, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += x;
                }
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        let shape = reduced_shape(t.shape(), axis);
        self.push(Tensor::from_parts(shape, out), Op::MeanReduce { input: a.0, axis }, &[a.0], "mean_reduce")
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0), &[a.0], "sum")
    }

    /// Selects slices along axis 0 (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let n = t.shape()[0];
        if rows.is_empty() {
            return dim_err("gather_rows", "no rows selected");
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return dim_err("gather_rows", format!("row {bad} of {n}"));
        }
        let inner = t.numel() / n;
        let mut data = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            data.extend_from_slice(&t.data()[r * inner..(r + 1) * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = rows.len();
        self.push(
            Tensor::from_parts(shape, data),
            Op::GatherRows { input: a.0, rows: rows.to_vec() },
            &[a.0],
            "gather_rows",
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return dim_err("transpose", format!("rank {}", t.rank()));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        self.push(Tensor::from_parts(vec![c, r], data), Op::Transpose(a.0), &[a.0], "transpose")
    }

    /// Softmax over the last axis with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (_, c) = last_dim(t);
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let shape = t.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::SoftmaxRows(a.0), &[a.0], "softmax_rows")
    }

    /// Per-row normalization over the last axis followed by `gamma`, `beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(TensorError::Contract(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let t = self.value(a);
        let (rows, c) = last_dim(t);
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.numel() != c || b.numel() != c {
            return dim_err("layer_norm", format!("gamma/beta {}/{} for width {c}", g.numel(), b.numel()));
        }
        let mut out = vec![0.0; t.numel()];
        let mut xhat = vec![0.0; t.numel()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let x = &t.data()[r * c..(r + 1) * c];
            let mean = x.iter().sum::<f64>() / c as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..c {
                let h = (x[j] - mean) * is;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let shape = t.shape().to_vec();
        self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm { input: a.0, gamma: gamma.0, beta: beta.0, xhat, inv_std },
            &[a.0, gamma.0, beta.0],
            "layer_norm",
        )
    }

    /// `logsumexp(logits) − logits[label]` for a single logit vector.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let t = self.value(logits);
        let c = t.numel();
        if t.rank() > 2 || (t.rank() == 2 && t.shape()[0] != 1) {
            return dim_err("cross_entropy", format!("expected one logit row, got {:?}", t.shape()));
        }
        if label >= c {
            return Err(TensorError::LabelOutOfRange { label, classes: c });
        }
        let mut probs = t.data().to_vec();
        softmax_in_place(&mut probs);
        let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data().iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let loss = lse - t.data()[label];
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits: logits.0, label, probs },
            &[logits.0],
            "cross_entropy",
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        self.push(t, Op::Reshape(a.0), &[a.0], "reshape")
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, c) = last_dim(t);
        if start >= end || end > c {
            return dim_err("slice_cols", format!("{start}..{end} of width {c}"));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&t.data()[r * c + start..r * c + end]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = w;
        self.push(
            Tensor::from_parts(shape, data),
            Op::SliceCols { input: a.0, start, end },
            &[a.0],
            "slice_cols",
        )
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if self.nodes[id].requires_grad {
                self.backprop_node(id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if let Some(ga) = self.slot(a, grads) {
                    gemm_nt_acc(g, tb.data(), ga, m, k, n);
                }
                if let Some(gb) = self.slot(b, grads) {
                    gemm_tn_acc(ta.data(), g, gb, m, k, n);
                }
            }
            &Op::Add(a, b) => {
                for (src, sign) in [(a, 1.0), (b, 1.0)] {
                    if let Some(gs) = self.slot(src, grads) {
                        axpy(sign, g, gs);
                    }
                }
            }
            &Op::Sub(a, b) => {
                for (src, sign) in [(a, 1.0), (b, -1.0)] {
                    if let Some(gs) = self.slot(src, grads) {
                        axpy(sign, g, gs);
                    }
                }
            }
            &Op::Mul(a, b) => {
                let (da, db) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                if let Some(ga) = self.slot(a, grads) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * db[i];
                    }
                }
                if let Some(gb) = self.slot(b, grads) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * da[i];
                    }
                }
            }
            &Op::Scale(a, f) => {
                if let Some(ga) = self.slot(a, grads) {
                    axpy(f, g, ga);
                }
            }
            &Op::AddBias(a, bias) => {
                if let Some(ga) = self.slot(a, grads) {
                    axpy(1.0, g, ga);
                }
                if let Some(gb) = self.slot(bias, grads) {
                    let c = gb.len();
                    for row in g.chunks(c) {
                        axpy(1.0, row, gb);
                    }
                }
            }
            &Op::ScaleGroups(x, gate) => {
                let tx = &self.nodes[x].value;
                let tg = &self.nodes[gate].value;
                let (outer, mid, inner) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                if let Some(gx) = self.slot(x, grads) {
                    for o in 0..outer {
                        let gv = &tg.data()[o * inner..(o + 1) * inner];
                        for m in 0..mid {
                            let base = (o * mid + m) * inner;
                            for i in 0..inner {
                                gx[base + i] += g[base + i] * gv[i];
                            }
                        }
                    }
                }
                if let Some(gg) = self.slot(gate, grads) {
                    for o in 0..outer {
                        for m in 0..mid {
                            let base = (o * mid + m) * inner;
                            for i in 0..inner {
                                gg[o * inner + i] += g[base + i] * tx.data()[base + i];
                            }
                        }
                    }
                }
            }
            &Op::Relu(a) => {
                if let Some(ga) = self.slot(a, grads) {
                    for i in 0..g.len() {
                        if out[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                }
            }
            &Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(a, grads) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &src in inputs {
                    let width = self.nodes[src].value.shape()[*axis] * inner;
                    if let Some(gs) = self.slot(src, grads) {
                        for o in 0..outer {
                            let from = o * total * inner + offset;
                            axpy(1.0, &g[from..from + width], &mut gs[o * width..(o + 1) * width]);
                        }
                    }
                    offset += width;
                }
            }
            Op::MaxReduce { input, sources } => {
                if let Some(ga) = self.slot(*input, grads) {
                    for (gv, &s) in g.iter().zip(sources) {
                        ga[s] += gv;
                    }
                }
            }
            &Op::MeanReduce { input, axis } => {
                let (outer, n, inner) = split_axis(self.nodes[input].value.shape(), axis);
                if let Some(ga) = self.slot(input, grads) {
                    let inv = 1.0 / n as f64;
                    for o in 0..outer {
                        for k in 0..n {
                            let base = (o * n + k) * inner;
                            axpy(inv, &g[o * inner..(o + 1) * inner], &mut ga[base..base + inner]);
                        }
                    }
                }
            }
            &Op::Sum(a) => {
                if let Some(ga) = self.slot(a, grads) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::GatherRows { input, rows } => {
                let inner = node.value.numel() / rows.len();
                if let Some(ga) = self.slot(*input, grads) {
                    for (k, &r) in rows.iter().enumerate() {
                        axpy(1.0, &g[k * inner..(k + 1) * inner], &mut ga[r * inner..(r + 1) * inner]);
                    }
                }
            }
            &Op::Transpose(a) => {
                let s = self.nodes[a].value.shape();
                let (r, c) = (s[0], s[1]);
                if let Some(ga) = self.slot(a, grads) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            &Op::SoftmaxRows(a) => {
                let (_, c) = last_dim(&node.value);
                if let Some(ga) = self.slot(a, grads) {
                    for ((y, gy), gx) in out.chunks(c).zip(g.chunks(c)).zip(ga.chunks_mut(c)) {
                        let s = dot(y, gy);
                        for j in 0..c {
                            gx[j] += y[j] * (gy[j] - s);
                        }
                    }
                }
            }
            Op::LayerNorm { input, gamma, beta, xhat, inv_std } => {
                let (_, c) = last_dim(&node.value);
                let gam = self.nodes[*gamma].value.data().to_vec();
                if let Some(gg) = self.slot(*gamma, grads) {
                    for (h, gy) in xhat.chunks(c).zip(g.chunks(c)) {
                        for j in 0..c {
                            gg[j] += gy[j] * h[j];
                        }
                    }
                }
                if let Some(gb) = self.slot(*beta, grads) {
                    for gy in g.chunks(c) {
                        axpy(1.0, gy, gb);
                    }
                }
                if let Some(gx) = self.slot(*input, grads) {
                    let mut dh = vec![0.0; c];
                    for (r, ((h, gy), gxr)) in xhat.chunks(c).zip(g.chunks(c)).zip(gx.chunks_mut(c)).enumerate() {
                        for j in 0..c {
                            dh[j] = gy[j] * gam[j];
                        }
                        let mean_dh = dh.iter().sum::<f64>() / c as f64;
                        let mean_dh_h = dot(&dh, h) / c as f64;
                        for j in 0..c {
                            gxr[j] += inv_std[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, label, probs } => {
                if let Some(gl) = self.slot(*logits, grads) {
                    for (j, &p) in probs.iter().enumerate() {
                        let target = if j == *label { 1.0 } else { 0.0 };
                        gl[j] += g[0] * (p - target);
                    }
                }
            }
            &Op::Reshape(a) => {
                if let Some(ga) = self.slot(a, grads) {
                    axpy(1.0, g, ga);
                }
            }
            &Op::SliceCols { input, start, end } => {
                let (_, c) = last_dim(&self.nodes[input].value);
                let w = end - start;
                if let Some(ga) = self.slot(input, grads) {
                    for (r, gr) in g.chunks(w).enumerate() {
                        axpy(1.0, gr, &mut ga[r * c + start..r * c + end]);
                    }
                }
            }
        }
    }

    /// Gradient buffer for `id`, allocated on first use; `None` when `id`
    /// does not need a gradient.
    fn slot<'g>(&self, id: usize, grads: &'g mut [Option<Vec<f64>>]) -> Option<&'g mut [f64]> {
        if !self.nodes[id].requires_grad {
            return None;
        }
        let n = self.nodes[id].value.numel();
        Some(grads[id].get_or_insert_with(|| vec![0.0; n]).as_mut_slice())
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    let inv = 1.0 / total;
    row.iter_mut().for_each(|x| *x *= inv);
}
