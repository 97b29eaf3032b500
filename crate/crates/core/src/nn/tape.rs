//! Reverse-mode automatic differentiation on a linear tape of batched
//! tensor operations.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::param(format!(
                "tensor shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading (batch) dimension and the product of the rest.
    fn rows_cols(&self) -> (usize, usize) {
        let b = self.shape.first().copied().unwrap_or(1);
        (b, if b == 0 { 0 } else { self.data.len() / b })
    }
}

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d { x: usize, w: usize, b: usize, stride: usize },
    Dense { x: usize, w: usize, b: usize },
    Relu(usize),
    SoftmaxCe { logits: usize, classes: usize, labels: Vec<usize> },
    Mse { pred: usize, target: Vec<f64> },
    Sum(usize),
    Transpose(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for one backward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar with respect to every node of its tape.
#[derive(Debug)]
pub struct Grads {
    tape: u64,
    grads: Vec<Tensor>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.tape {
            return Err(Error::Usage("variable belongs to a different tape".into()));
        }
        Ok(&self.grads[v.idx])
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::Usage("variable belongs to a different tape".into()));
        }
        Ok(v.idx)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Cross-correlation with bias and valid padding.
    ///
    /// `x` is `[batch, in_ch, len]`, `w` is `[out_ch, in_ch, kernel]`, `b` is
    /// `[out_ch]`; the output is `[batch, out_ch, (len - kernel) / stride + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (xs, ws, bs) = (
            self.nodes[xi].value.shape(),
            self.nodes[wi].value.shape(),
            self.nodes[bi].value.shape(),
        );
        if xs.len() != 3 || ws.len() != 3 || bs != [ws[0]] || ws[1] != xs[1] || stride == 0 {
            return Err(Error::param(format!(
                "conv1d shapes x {xs:?}, w {ws:?}, b {bs:?}, stride {stride} do not chain"
            )));
        }
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        if len < k {
            return Err(Error::param(format!("conv1d input length {len} below kernel {k}")));
        }
        let lout = (len - k) / stride + 1;
        let (xd, wd, bd) = (
            self.nodes[xi].value.data(),
            self.nodes[wi].value.data(),
            self.nodes[bi].value.data(),
        );
        let mut out = vec![0.0; batch * cout * lout];
        for n in 0..batch {
            for o in 0..cout {
                let dst = &mut out[(n * cout + o) * lout..(n * cout + o + 1) * lout];
                dst.fill(bd[o]);
                for c in 0..cin {
                    let xrow = &xd[(n * cin + c) * len..(n * cin + c + 1) * len];
                    let wrow = &wd[(o * cin + c) * k..(o * cin + c + 1) * k];
                    for (t, d) in dst.iter_mut().enumerate() {
                        let seg = &xrow[t * stride..t * stride + k];
                        *d += seg.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
        let value = Tensor::from_vec(&[batch, cout, lout], out)?;
        Ok(self.push(value, Op::Conv1d { x: xi, w: wi, b: bi, stride }))
    }

    /// Affine map over all trailing dimensions of `x`: `[batch, ...]` to
    /// `[batch, out]` with `w` of shape `[out, in]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (batch, nin) = self.nodes[xi].value.rows_cols();
        let ws = self.nodes[wi].value.shape();
        if ws.len() != 2 || ws[1] != nin || self.nodes[bi].value.shape() != [ws[0]] {
            return Err(Error::param(format!(
                "dense shapes x {:?}, w {ws:?} do not chain",
                self.nodes[xi].value.shape()
            )));
        }
        let nout = ws[0];
        let (xd, wd, bd) = (
            self.nodes[xi].value.data(),
            self.nodes[wi].value.data(),
            self.nodes[bi].value.data(),
        );
        let mut out = vec![0.0; batch * nout];
        for n in 0..batch {
            let xr = &xd[n * nin..(n + 1) * nin];
            for o in 0..nout {
                let wr = &wd[o * nin..(o + 1) * nin];
                out[n * nout + o] = bd[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let value = Tensor::from_vec(&[batch, nout], out)?;
        Ok(self.push(value, Op::Dense { x: xi, w: wi, b: bi }))
    }

    /// `max(x, 0)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let src = &self.nodes[xi].value;
        let value = Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&v| v.max(0.0)).collect(),
        };
        Ok(self.push(value, Op::Relu(xi)))
    }

    /// Mean softmax cross-entropy. `logits` is `[batch, groups * classes]`,
    /// one label per (row, group).
    pub fn softmax_ce(&mut self, logits: Var, classes: usize, labels: &[usize]) -> Result<Var> {
        let li = self.idx(logits)?;
        let z = &self.nodes[li].value;
        if classes == 0 || z.len() % classes != 0 || z.len() / classes != labels.len() {
            return Err(Error::param("softmax_ce: logits and labels do not match"));
        }
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::param("softmax_ce: label out of range"));
        }
        let mut loss = 0.0;
        for (row, &l) in z.data.chunks(classes).zip(labels) {
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[l];
        }
        let value = Tensor::scalar(loss / labels.len() as f64);
        Ok(self.push(
            value,
            Op::SoftmaxCe {
                logits: li,
                classes,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean squared error against a flat target of equal length.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let pi = self.idx(pred)?;
        let p = &self.nodes[pi].value;
        if p.len() != target.len() || target.is_empty() {
            return Err(Error::param("mse: prediction and target lengths differ"));
        }
        let loss = p.data.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / target.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred: pi,
                target: target.to_vec(),
            },
        ))
    }

    /// Swaps the last two axes of a `[batch, a, b]` tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let src = &self.nodes[xi].value;
        if src.shape.len() != 3 {
            return Err(Error::param("transpose needs a rank-3 tensor"));
        }
        let (batch, a, b) = (src.shape[0], src.shape[1], src.shape[2]);
        let mut out = vec![0.0; src.len()];
        for n in 0..batch {
            for i in 0..a {
                for j in 0..b {
                    out[(n * b + j) * a + i] = src.data[(n * a + i) * b + j];
                }
            }
        }
        let value = Tensor::from_vec(&[batch, b, a], out)?;
        Ok(self.push(value, Op::Transpose(xi)))
    }

    /// Sum of all entries.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let s = self.nodes[xi].value.data.iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(xi)))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let li = self.idx(loss)?;
        if self.nodes[li].value.len() != 1 {
            return Err(Error::Usage("backward needs a scalar loss".into()));
        }
        let mut g: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        g[li].data[0] = 1.0;
        for i in (0..=li).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let gout = std::mem::replace(&mut g[i], Tensor::zeros(&[0]));
            if gout.data.iter().all(|&v| v == 0.0) {
                g[i] = gout;
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                &Op::Conv1d { x, w, b, stride } => {
                    let xv = &self.nodes[x].value;
                    let wv = &self.nodes[w].value;
                    let (batch, cin, len) = (xv.shape[0], xv.shape[1], xv.shape[2]);
                    let (cout, k) = (wv.shape[0], wv.shape[2]);
                    let lout = node.value.shape[2];
                    let mut gx = std::mem::take(&mut g[x].data);
                    let mut gw = std::mem::take(&mut g[w].data);
                    let mut gb = std::mem::take(&mut g[b].data);
                    for n in 0..batch {
                        for o in 0..cout {
                            let go = &gout.data[(n * cout + o) * lout..(n * cout + o + 1) * lout];
                            gb[o] += go.iter().sum::<f64>();
                            for c in 0..cin {
                                let xo = (n * cin + c) * len;
                                let wo = (o * cin + c) * k;
                                for (t, &gt) in go.iter().enumerate() {
                                    if gt == 0.0 {
                                        continue;
                                    }
                                    let s = xo + t * stride;
                                    for j in 0..k {
                                        gw[wo + j] += gt * xv.data[s + j];
                                        gx[s + j] += gt * wv.data[wo + j];
                                    }
                                }
                            }
                        }
                    }
                    g[x].data = gx;
                    g[w].data = gw;
                    g[b].data = gb;
                }
                &Op::Dense { x, w, b } => {
                    let xv = &self.nodes[x].value;
                    let wv = &self.nodes[w].value;
                    let (batch, nin) = xv.rows_cols();
                    let nout = wv.shape[0];
                    let mut gx = std::mem::take(&mut g[x].data);
                    let mut gw = std::mem::take(&mut g[w].data);
                    let mut gb = std::mem::take(&mut g[b].data);
                    for n in 0..batch {
                        let xr = &xv.data[n * nin..(n + 1) * nin];
                        for o in 0..nout {
                            let go = gout.data[n * nout + o];
                            if go == 0.0 {
                                continue;
                            }
                            gb[o] += go;
                            let wr = &wv.data[o * nin..(o + 1) * nin];
                            let gwr = &mut gw[o * nin..(o + 1) * nin];
                            for j in 0..nin {
                                gwr[j] += go * xr[j];
                                gx[n * nin + j] += go * wr[j];
                            }
                        }
                    }
                    g[x].data = gx;
                    g[w].data = gw;
                    g[b].data = gb;
                }
                &Op::Relu(x) => {
                    let xv = &self.nodes[x].value;
                    for ((gx, &v), &go) in g[x].data.iter_mut().zip(&xv.data).zip(&gout.data) {
                        if v > 0.0 {
                            *gx += go;
                        }
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    classes,
                    labels,
                } => {
                    let z = &self.nodes[*logits].value;
                    let scale = gout.data[0] / labels.len() as f64;
                    let gz = &mut g[*logits].data;
                    for ((row, grow), &l) in z
                        .data
                        .chunks(*classes)
                        .zip(gz.chunks_mut(*classes))
                        .zip(labels)
                    {
                        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        for (j, (gv, v)) in grow.iter_mut().zip(row).enumerate() {
                            let p = (v - m).exp() / s;
                            *gv += scale * (p - if j == l { 1.0 } else { 0.0 });
                        }
                    }
                }
                Op::Mse { pred, target } => {
                    let p = &self.nodes[*pred].value;
                    let scale = 2.0 * gout.data[0] / target.len() as f64;
                    for ((gv, v), t) in g[*pred].data.iter_mut().zip(&p.data).zip(target) {
                        *gv += scale * (v - t);
                    }
                }
                &Op::Transpose(x) => {
                    let (batch, a, b) = (node.value.shape[0], node.value.shape[2], node.value.shape[1]);
                    let gx = &mut g[x].data;
                    for n in 0..batch {
                        for i in 0..a {
                            for j in 0..b {
                                gx[(n * a + i) * b + j] += gout.data[(n * b + j) * a + i];
                            }
                        }
                    }
                }
                &Op::Sum(x) => {
                    let s = gout.data[0];
                    for gv in &mut g[x].data {
                        *gv += s;
                    }
                }
            }
            g[i] = gout;
        }
        Ok(Grads {
            tape: self.id,
            grads: g,
        })
    }
}
