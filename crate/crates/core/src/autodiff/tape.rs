//! Operation tape and the reverse sweep.
//!
//! All ops act on the last axis of their operands, so the same recorded
//! function works for a single sample of shape `[n]` and for a batch of shape
//! `[b, n]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Tanh,
    Sigmoid,
    Sin,
    Cos,
    Square,
}

impl Unary {
    fn apply(self, v: f64) -> f64 {
        match self {
            Unary::Relu => v.max(0.0),
            Unary::Tanh => v.tanh(),
            Unary::Sigmoid => sigmoid(v),
            Unary::Sin => v.sin(),
            Unary::Cos => v.cos(),
            Unary::Square => v * v,
        }
    }

    /// Derivative given the input `x` and the output `y = apply(x)`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            // subgradient at the kink is 0
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Square => 2.0 * x,
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Parameter-gradient slots for a trainable op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlots {
    pub weight: usize,
    pub bias: usize,
}

/// Geometry of a valid (unpadded, stride 1) 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        self.height + 1 - self.kernel
    }

    pub fn out_width(&self) -> usize {
        self.width + 1 - self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// im2col: `[patch_len, oh*ow]` matrix for one sample.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (oh, ow, k) = (self.out_height(), self.out_width(), self.kernel);
        let cols = oh * ow;
        let mut out = vec![0.0; self.patch_len() * cols];
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            out[row * cols + oy * ow + ox] =
                                x[(c * self.height + oy + ky) * self.width + ox + kx];
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im_add(&self, cols_grad: &[f64], dx: &mut [f64]) {
        let (oh, ow, k) = (self.out_height(), self.out_width(), self.kernel);
        let cols = oh * ow;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            dx[(c * self.height + oy + ky) * self.width + ox + kx] +=
                                cols_grad[row * cols + oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Input,
    Dense {
        x: NodeId,
        weight: Arc<Vec<f64>>,
        n_in: usize,
        n_out: usize,
        slots: Option<ParamSlots>,
    },
    Conv2d {
        x: NodeId,
        kernel: Arc<Vec<f64>>,
        geometry: ConvGeometry,
        slots: Option<ParamSlots>,
    },
    Unary {
        x: NodeId,
        kind: Unary,
    },
    Softmax {
        x: NodeId,
    },
    LogSoftmax {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Pick {
        x: NodeId,
        indices: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Record of primitive operations for one forward evaluation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn last_dim(t: &Tensor) -> usize {
    t.shape().last().copied().unwrap_or(1)
}

fn with_last_dim(shape: &[usize], n: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    match s.last_mut() {
        Some(last) => *last = n,
        None => s.push(n),
    }
    s
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Affine map on the last axis: `y = W x + b` with `W` stored `[n_out, n_in]`.
    pub fn dense(
        &mut self,
        x: NodeId,
        weight: Arc<Vec<f64>>,
        bias: Arc<Vec<f64>>,
        slots: Option<ParamSlots>,
    ) -> Result<NodeId> {
        let xv = self.value(x);
        let n_in = last_dim(xv);
        let n_out = bias.len();
        if weight.len() != n_in * n_out {
            return Err(Error::ShapeMismatch {
                expected: vec![n_out, n_in],
                actual: vec![weight.len()],
            });
        }
        let rows = xv.len() / n_in.max(1);
        let mut out = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &xv.data()[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let wr = &weight[o * n_in..(o + 1) * n_in];
                out[r * n_out + o] = crate::tensor::dot(wr, xr) + bias[o];
            }
        }
        let value = Tensor::from_raw(with_last_dim(xv.shape(), n_out), out)?;
        Ok(self.push(
            Op::Dense {
                x,
                weight,
                n_in,
                n_out,
                slots,
            },
            value,
        ))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: Arc<Vec<f64>>,
        bias: Arc<Vec<f64>>,
        geometry: ConvGeometry,
        slots: Option<ParamSlots>,
    ) -> Result<NodeId> {
        let xv = self.value(x);
        if last_dim(xv) != geometry.input_len() {
            return Err(Error::ShapeMismatch {
                expected: vec![geometry.input_len()],
                actual: xv.shape().to_vec(),
            });
        }
        if kernel.len() != geometry.out_channels * geometry.patch_len()
            || bias.len() != geometry.out_channels
        {
            return Err(Error::invalid("conv2d kernel/bias size"));
        }
        let rows = xv.len() / geometry.input_len();
        let cols = geometry.out_height() * geometry.out_width();
        let p = geometry.patch_len();
        let mut out = vec![0.0; rows * geometry.output_len()];
        for r in 0..rows {
            let patches =
                geometry.im2col(&xv.data()[r * geometry.input_len()..(r + 1) * geometry.input_len()]);
            let o_base = r * geometry.output_len();
            for oc in 0..geometry.out_channels {
                for col in 0..cols {
                    let mut acc = bias[oc];
                    for i in 0..p {
                        acc += kernel[oc * p + i] * patches[i * cols + col];
                    }
                    out[o_base + oc * cols + col] = acc;
                }
            }
        }
        let value = Tensor::from_raw(with_last_dim(xv.shape(), geometry.output_len()), out)?;
        Ok(self.push(
            Op::Conv2d {
                x,
                kernel,
                geometry,
                slots,
            },
            value,
        ))
    }

    pub fn unary(&mut self, x: NodeId, kind: Unary) -> NodeId {
        let value = self.value(x).map(|v| kind.apply(v));
        self.push(Op::Unary { x, kind }, value)
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = last_dim(xv);
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let value = Tensor::from_raw(xv.shape().to_vec(), out).expect("same shape");
        self.push(Op::Softmax { x }, value)
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = last_dim(xv);
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let value = Tensor::from_raw(xv.shape().to_vec(), out).expect("same shape");
        self.push(Op::LogSoftmax { x }, value)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(Op::Sum { x }, Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let s = xv.sum() / xv.len() as f64;
        self.push(Op::Mean { x }, Tensor::scalar(s))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub { a, b }, value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul { a, b }, value))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).scale(c);
        self.push(Op::Scale { x, c }, value)
    }

    /// Contiguous range `[start, start + len)` of the last axis.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let n = last_dim(xv);
        if start + len > n {
            return Err(Error::invalid(format!(
                "slice {start}..{} out of range for last axis {n}",
                start + len
            )));
        }
        let out: Vec<f64> = xv
            .data()
            .chunks(n)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let value = Tensor::from_raw(with_last_dim(xv.shape(), len), out)?;
        Ok(self.push(Op::Slice { x, start, len }, value))
    }

    /// Concatenation along the last axis; all parts must share leading dims.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = self
            .value(*parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?)
            .clone();
        let lead = &first.shape()[..first.shape().len().saturating_sub(1)];
        let rows = first.len() / last_dim(&first).max(1);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if &v.shape()[..v.shape().len().saturating_sub(1)] != lead {
                return Err(Error::ShapeMismatch {
                    expected: first.shape().to_vec(),
                    actual: v.shape().to_vec(),
                });
            }
            widths.push(last_dim(v));
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::from_raw(with_last_dim(first.shape(), total), out)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    /// Per-row gather: `y[r] = x[r, indices[r]]`.
    pub fn pick(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId> {
        let xv = self.value(x);
        let n = last_dim(xv);
        let rows = xv.len() / n.max(1);
        if indices.len() != rows {
            return Err(Error::invalid(format!(
                "pick needs {rows} indices, got {}",
                indices.len()
            )));
        }
        let mut out = Vec::with_capacity(rows);
        for (r, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::SelectorOutOfRange {
                    selector: i,
                    size: n,
                });
            }
            out.push(xv.data()[r * n + i]);
        }
        let value = Tensor::from_raw(vec![rows], out)?;
        Ok(self.push(
            Op::Pick {
                x,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    /// Reverse sweep from `output` seeded with `seed` (same shape as the output).
    ///
    /// Every op recorded at or before `output` is visited exactly once, in
    /// reverse recording order.
    pub fn backward(&self, output: NodeId, seed: &Tensor) -> Result<Adjoints> {
        self.value(output).same_shape(seed)?;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(seed.data().to_vec());
        let mut params: Vec<Option<Vec<f64>>> = Vec::new();

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            // inputs keep their adjoint for the caller
            if matches!(node.op, Op::Input) {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Dense {
                    x,
                    weight,
                    n_in,
                    n_out,
                    slots,
                    ..
                } => {
                    let (n_in, n_out) = (*n_in, *n_out);
                    let xv = self.value(*x).data();
                    let rows = g.len() / n_out.max(1);
                    let mut dx = vec![0.0; xv.len()];
                    for r in 0..rows {
                        let gr = &g[r * n_out..(r + 1) * n_out];
                        let dxr = &mut dx[r * n_in..(r + 1) * n_in];
                        for (o, &go) in gr.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            for (d, w) in dxr.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
                                *d += w * go;
                            }
                        }
                    }
                    if let Some(s) = slots {
                        let dw = param_slot(&mut params, s.weight, n_in * n_out);
                        for r in 0..rows {
                            let xr = &xv[r * n_in..(r + 1) * n_in];
                            for o in 0..n_out {
                                let go = g[r * n_out + o];
                                for (d, xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(xr) {
                                    *d += go * xi;
                                }
                            }
                        }
                        let db = param_slot(&mut params, s.bias, n_out);
                        for r in 0..rows {
                            for o in 0..n_out {
                                db[o] += g[r * n_out + o];
                            }
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Conv2d {
                    x,
                    kernel,
                    geometry,
                    slots,
                    ..
                } => {
                    let geo = *geometry;
                    let xv = self.value(*x).data();
                    let (il, ol, p) = (geo.input_len(), geo.output_len(), geo.patch_len());
                    let cols = geo.out_height() * geo.out_width();
                    let rows = xv.len() / il;
                    let mut dx = vec![0.0; xv.len()];
                    let mut dk = vec![0.0; kernel.len()];
                    let mut db = vec![0.0; geo.out_channels];
                    for r in 0..rows {
                        let gr = &g[r * ol..(r + 1) * ol];
                        let patches = geo.im2col(&xv[r * il..(r + 1) * il]);
                        let mut dcols = vec![0.0; p * cols];
                        for oc in 0..geo.out_channels {
                            for col in 0..cols {
                                let go = gr[oc * cols + col];
                                db[oc] += go;
                                for i in 0..p {
                                    dk[oc * p + i] += go * patches[i * cols + col];
                                    dcols[i * cols + col] += kernel[oc * p + i] * go;
                                }
                            }
                        }
                        geo.col2im_add(&dcols, &mut dx[r * il..(r + 1) * il]);
                    }
                    if let Some(s) = slots {
                        add_into(param_slot(&mut params, s.weight, dk.len()), &dk);
                        add_into(param_slot(&mut params, s.bias, db.len()), &db);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Unary { x, kind } => {
                    let xv = self.value(*x).data();
                    let yv = node.value.data();
                    let dx = g
                        .iter()
                        .zip(xv.iter().zip(yv))
                        .map(|(gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                        .collect();
                    accumulate(&mut adj, *x, dx);
                }
                Op::Softmax { x } => {
                    let y = node.value.data();
                    let n = last_dim(&node.value).max(1);
                    let mut dx = vec![0.0; y.len()];
                    for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                        let s = crate::tensor::dot(yr, gr);
                        for i in 0..n {
                            dr[i] = yr[i] * (gr[i] - s);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::LogSoftmax { x } => {
                    let y = node.value.data();
                    let n = last_dim(&node.value).max(1);
                    let mut dx = vec![0.0; y.len()];
                    for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                        let s: f64 = gr.iter().sum();
                        for i in 0..n {
                            dr[i] = gr[i] - yr[i].exp() * s;
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Sum { x } => {
                    let n = self.value(*x).len();
                    accumulate(&mut adj, *x, vec![g[0]; n]);
                }
                Op::Mean { x } => {
                    let n = self.value(*x).len();
                    accumulate(&mut adj, *x, vec![g[0] / n as f64; n]);
                }
                Op::Add { a, b } => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut adj, *b, g.iter().map(|v| -v).collect());
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul { a, b } => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let da = g.iter().zip(bv).map(|(gi, bi)| gi * bi).collect();
                    let db = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale { x, c } => {
                    accumulate(&mut adj, *x, g.iter().map(|v| v * c).collect());
                }
                Op::Slice { x, start, len } => {
                    let xv = self.value(*x);
                    let n = last_dim(xv);
                    let mut dx = vec![0.0; xv.len()];
                    for (dr, gr) in dx.chunks_mut(n).zip(g.chunks(*len)) {
                        dr[*start..start + len].copy_from_slice(gr);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Concat { parts } => {
                    let total = last_dim(&node.value);
                    let mut offset = 0;
                    for &p in parts {
                        let w = last_dim(self.value(p));
                        let dp = g
                            .chunks(total)
                            .flat_map(|row| row[offset..offset + w].iter().copied())
                            .collect();
                        accumulate(&mut adj, p, dp);
                        offset += w;
                    }
                }
                Op::Pick { x, indices } => {
                    let xv = self.value(*x);
                    let n = last_dim(xv);
                    let mut dx = vec![0.0; xv.len()];
                    for (r, &i) in indices.iter().enumerate() {
                        dx[r * n + i] = g[r];
                    }
                    accumulate(&mut adj, *x, dx);
                }
            }
        }
        Ok(Adjoints { nodes: adj, params })
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id.0] {
        Some(existing) => add_into(existing, &g),
        slot @ None => *slot = Some(g),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn param_slot(params: &mut Vec<Option<Vec<f64>>>, slot: usize, len: usize) -> &mut Vec<f64> {
    if params.len() <= slot {
        params.resize(slot + 1, None);
    }
    params[slot].get_or_insert_with(|| vec![0.0; len])
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Adjoints {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Adjoint of an input node; zeros when the output does not depend on it.
    pub fn input_grad(&self, tape: &Tape, id: NodeId) -> Tensor {
        let shape = tape.value(id).shape().to_vec();
        match self.nodes.get(id.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::from_raw(shape, g.clone()).expect("adjoint matches value shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn param_grad(&self, slot: usize) -> Option<&[f64]> {
        self.params.get(slot).and_then(|g| g.as_deref())
    }
}
