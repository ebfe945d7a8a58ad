//! Reverse-mode automatic differentiation over whole-tensor operations.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and returns
//! the gradient of that scalar with respect to every parameter leaf. The
//! record is consumed by the backward pass.

use std::sync::Arc;

use super::tensor::{matmul_a_bt_acc, matmul_at_b_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Index of a trainable tensor inside a model's parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Spatial layout of a same-padded 3×3 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.in_channels * 9
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    ChannelExpand(Var, usize),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SignedPow(Var, f64),
    Mean(Var),
    Sum(Var),
    Conv2d { input: Var, weight: Var, geom: ConvGeom },
    MaxPool2 { input: Var, argmax: Vec<usize>, in_len: usize },
    RowMahalanobis { input: Var, centers: Vec<f64>, precisions: Vec<Arc<Tensor>> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    JsDivergence { logits: Var, log_p: Vec<f64>, log_q: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Per-parameter gradients produced by [`Tape::backward`]; parameters that
/// appear several times on the tape have their contributions summed.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    entries: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.entries.iter().find(|(p, _)| *p == id).map(|(_, g)| g.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.entries.iter().map(|(p, g)| (*p, g.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn accumulate(&mut self, id: ParamId, g: Vec<f64>) {
        match self.entries.iter_mut().find(|(p, _)| *p == id) {
            Some((_, acc)) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => self.entries.push((id, g)),
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Records a trainable tensor.
    pub fn param(&mut self, id: ParamId, t: &Tensor) -> Var {
        let mut value = t.clone();
        value.clear_grad();
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a length-`m` bias to every row of an `n×m` tensor.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let m = xv.cols();
        if bv.len() != m {
            return Err(Error::dim(format!("bias of length {} for rows of width {m}", bv.len())));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(m.max(1)) {
            row.iter_mut().zip(bv.data()).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(format!("add {:?} + {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * c).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Relu(x))
    }

    /// Element-wise `sign(v)·|v|^power`. The derivative at exactly zero is
    /// taken as zero.
    pub fn signed_pow(&mut self, x: Var, power: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| signed_pow(v, power)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::SignedPow(x, power))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::param("mean of an empty tensor"));
        }
        let m = xv.data().iter().sum::<f64>() / xv.len() as f64;
        Ok(self.push(Tensor::scalar(m), Op::Mean(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Same-padded 3×3, stride-1 convolution. `input` is `N × (C·H·W)`,
    /// `weight` is `O × (C·9)`; the result is `N × (O·H·W)` (bias not
    /// included, add it with [`Tape::add_channel_bias`]).
    pub fn conv2d(&mut self, input: Var, weight: Var, geom: ConvGeom) -> Result<Var> {
        let (xv, wv) = (self.value(input), self.value(weight));
        let plane = geom.height * geom.width;
        if xv.cols() != geom.in_channels * plane {
            return Err(Error::dim(format!("conv input width {} for geometry {:?}", xv.cols(), geom)));
        }
        if wv.shape() != [geom.out_channels, geom.patch()] {
            return Err(Error::dim(format!("conv weight shape {:?}", wv.shape())));
        }
        let n = xv.rows();
        let mut out = vec![0.0; n * geom.out_channels * plane];
        let mut cols = vec![0.0; plane * geom.patch()];
        for s in 0..n {
            im2col(xv.row(s), &geom, &mut cols);
            // out_s (O × HW) = W (O × C9) · colsᵀ (C9 × HW)
            let dst = &mut out[s * geom.out_channels * plane..(s + 1) * geom.out_channels * plane];
            matmul_a_bt_acc(wv.data(), &cols, dst, geom.out_channels, plane, geom.patch());
        }
        let out = Tensor::matrix(n, geom.out_channels * plane, out)?;
        Ok(self.push(out, Op::Conv2d { input, weight, geom }))
    }

    /// Adds one bias value per channel to an `N × (O·H·W)` feature map.
    pub fn add_channel_bias(&mut self, x: Var, b: Var, plane: usize) -> Result<Var> {
        // expressed through AddBias on an expanded bias so backward stays simple
        let bv = self.value(b);
        let channels = bv.len();
        if self.value(x).cols() != channels * plane {
            return Err(Error::dim("channel bias does not match feature map"));
        }
        let expanded: Vec<f64> = bv.data().iter().flat_map(|&v| std::iter::repeat_n(v, plane)).collect();
        let eb = self.push(Tensor::new(vec![channels * plane], expanded)?, Op::ChannelExpand(b, plane));
        self.add_bias(x, eb)
    }

    /// 2×2, stride-2 max pooling over `N × (C·H·W)` maps; odd trailing rows
    /// and columns are dropped.
    pub fn max_pool2(&mut self, x: Var, channels: usize, height: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() != channels * height * width {
            return Err(Error::dim("pool input does not match geometry"));
        }
        let (oh, ow) = (height / 2, width / 2);
        let n = xv.rows();
        let in_len = xv.len();
        let mut out = Vec::with_capacity(n * channels * oh * ow);
        let mut argmax = Vec::with_capacity(out.capacity());
        for s in 0..n {
            let row = xv.row(s);
            for c in 0..channels {
                let base = c * height * width;
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best = base + (2 * i) * width + 2 * j;
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let k = base + (2 * i + di) * width + 2 * j + dj;
                            if row[k] > row[best] {
                                best = k;
                            }
                        }
                        out.push(row[best]);
                        argmax.push(s * channels * height * width + best);
                    }
                }
            }
        }
        let out = Tensor::matrix(n, channels * oh * ow, out)?;
        Ok(self.push(out, Op::MaxPool2 { input: x, argmax, in_len }))
    }

    /// Per-row Mahalanobis distance `sqrt((x_i − c_i)ᵀ P_i (x_i − c_i))`
    /// against a row-specific center and symmetric precision matrix. Returns
    /// a length-`N` vector. The centers and precisions are constants.
    pub fn row_mahalanobis(&mut self, x: Var, centers: Vec<f64>, precisions: Vec<Arc<Tensor>>) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        if centers.len() != n * d || precisions.len() != n {
            return Err(Error::dim("one center and precision per row required"));
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let p = &precisions[i];
            if p.shape() != [d, d] {
                return Err(Error::dim(format!("precision {:?} for features of width {d}", p.shape())));
            }
            let r: Vec<f64> = xv.row(i).iter().zip(&centers[i * d..(i + 1) * d]).map(|(a, b)| a - b).collect();
            out.push(quad_form(p.data(), &r).max(0.0).sqrt());
        }
        let out = Tensor::new(vec![n], out)?;
        Ok(self.push(out, Op::RowMahalanobis { input: x, centers, precisions }))
    }

    /// Mean cross-entropy of `N × K` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (n, k) = (lv.rows(), lv.cols());
        if labels.len() != n || n == 0 {
            return Err(Error::param(format!("{} labels for {} rows", labels.len(), n)));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::param(format!("label {bad} outside [0, {k})")));
        }
        let mut probs = Vec::with_capacity(n * k);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let lp = log_softmax_row(lv.row(i), 1.0);
            loss -= lp[y];
            probs.extend(lp.iter().map(|v| v.exp()));
        }
        let out = Tensor::scalar(loss / n as f64);
        Ok(self.push(out, Op::CrossEntropy { logits, labels: labels.to_vec(), probs }))
    }

    /// Mean Jensen-Shannon divergence `½KL(p‖q) + ½KL(q‖p)` between the row
    /// softmax `p` of `logits` and fixed target log-probabilities `log_q`.
    pub fn js_divergence(&mut self, logits: Var, log_q: Vec<f64>) -> Result<Var> {
        let lv = self.value(logits);
        let (n, k) = (lv.rows(), lv.cols());
        if log_q.len() != n * k || n == 0 {
            return Err(Error::dim("target distribution does not match logits"));
        }
        let mut log_p = Vec::with_capacity(n * k);
        let mut total = 0.0;
        for i in 0..n {
            let lp = log_softmax_row(lv.row(i), 1.0);
            let lq = &log_q[i * k..(i + 1) * k];
            total += js_row(&lp, lq);
            log_p.extend(lp);
        }
        let out = Tensor::scalar(total / n as f64);
        Ok(self.push(out, Op::JsDivergence { logits, log_p, log_q }))
    }

    /// Computes gradients of the scalar `loss` with respect to every
    /// parameter on the tape, then clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called without a recorded tape".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State("loss node is not on this tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::dim("backward needs a scalar loss"));
        }
        let nodes = std::mem::take(&mut self.nodes);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let mut ga = vec![0.0; n * k];
                    matmul_a_bt_acc(&g, bv.data(), &mut ga, n, k, m);
                    let mut gb = vec![0.0; k * m];
                    matmul_at_b_acc(av.data(), &g, &mut gb, n, k, m);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(x, b) => {
                    let m = nodes[b.0].value.len();
                    let mut gb = vec![0.0; m];
                    for row in g.chunks(m.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::ChannelExpand(b, plane) => {
                    let gb = g.chunks(*plane).map(|c| c.iter().sum()).collect();
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Scale(x, c) => {
                    acc(&mut grads, *x, g.iter().map(|v| v * c).collect());
                }
                Op::Relu(x) => {
                    let xv = nodes[x.0].value.data();
                    let gx = g.iter().zip(xv).map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 }).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::SignedPow(x, power) => {
                    let xv = nodes[x.0].value.data();
                    let gx = g
                        .iter()
                        .zip(xv)
                        .map(|(gv, &v)| if v == 0.0 { 0.0 } else { gv * power * v.abs().powf(power - 1.0) })
                        .collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Mean(x) => {
                    let len = nodes[x.0].value.len();
                    acc(&mut grads, *x, vec![g[0] / len as f64; len]);
                }
                Op::Sum(x) => {
                    let len = nodes[x.0].value.len();
                    acc(&mut grads, *x, vec![g[0]; len]);
                }
                Op::Conv2d { input, weight, geom } => {
                    let (xv, wv) = (&nodes[input.0].value, &nodes[weight.0].value);
                    let plane = geom.height * geom.width;
                    let span = geom.out_channels * plane;
                    let mut gw = vec![0.0; wv.len()];
                    let mut gx = vec![0.0; xv.len()];
                    let mut cols = vec![0.0; plane * geom.patch()];
                    let mut gcols = vec![0.0; plane * geom.patch()];
                    for s in 0..xv.rows() {
                        let gs = &g[s * span..(s + 1) * span];
                        im2col(xv.row(s), geom, &mut cols);
                        // gW (O × C9) += gs (O × HW) · cols (HW × C9)
                        for o in 0..geom.out_channels {
                            let grow = &gs[o * plane..(o + 1) * plane];
                            let wrow = &mut gw[o * geom.patch()..(o + 1) * geom.patch()];
                            for (p, &gv) in grow.iter().enumerate() {
                                if gv == 0.0 {
                                    continue;
                                }
                                let crow = &cols[p * geom.patch()..(p + 1) * geom.patch()];
                                wrow.iter_mut().zip(crow).for_each(|(w, c)| *w += gv * c);
                            }
                        }
                        // gcols (HW × C9) = gsᵀ (HW × O) · W (O × C9)
                        gcols.iter_mut().for_each(|v| *v = 0.0);
                        matmul_at_b_acc(gs, wv.data(), &mut gcols, geom.out_channels, plane, geom.patch());
                        col2im_acc(&gcols, geom, &mut gx[s * xv.cols()..(s + 1) * xv.cols()]);
                    }
                    acc(&mut grads, *weight, gw);
                    acc(&mut grads, *input, gx);
                }
                Op::MaxPool2 { input, argmax, in_len } => {
                    let mut gx = vec![0.0; *in_len];
                    for (gv, &k) in g.iter().zip(argmax) {
                        gx[k] += gv;
                    }
                    acc(&mut grads, *input, gx);
                }
                Op::RowMahalanobis { input, centers, precisions } => {
                    let xv = &nodes[input.0].value;
                    let d = xv.cols();
                    let dist = node.value.data();
                    let mut gx = vec![0.0; xv.len()];
                    for i in 0..xv.rows() {
                        if dist[i] == 0.0 || g[i] == 0.0 {
                            continue;
                        }
                        let r: Vec<f64> =
                            xv.row(i).iter().zip(&centers[i * d..(i + 1) * d]).map(|(a, b)| a - b).collect();
                        let p = precisions[i].data();
                        let scale = g[i] / dist[i];
                        // ∂/∂x sqrt(rᵀPr) = P r / d for symmetric P
                        for a in 0..d {
                            let pr: f64 = p[a * d..(a + 1) * d].iter().zip(&r).map(|(x, y)| x * y).sum();
                            gx[i * d + a] = scale * pr;
                        }
                    }
                    acc(&mut grads, *input, gx);
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let n = labels.len();
                    let k = probs.len() / n;
                    let scale = g[0] / n as f64;
                    let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (i, &y) in labels.iter().enumerate() {
                        gl[i * k + y] -= scale;
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::JsDivergence { logits, log_p, log_q } => {
                    let k = nodes[logits.0].value.cols();
                    let n = log_p.len() / k;
                    let scale = g[0] / n as f64;
                    let mut gl = vec![0.0; n * k];
                    for i in 0..n {
                        let lp = &log_p[i * k..(i + 1) * k];
                        let lq = &log_q[i * k..(i + 1) * k];
                        // with u_j = p_j ∂L/∂p_j = ½(p_j ln(p_j/q_j) + p_j − q_j):
                        // ∂L/∂z_j = u_j − p_j Σ_k u_k
                        let u: Vec<f64> = lp
                            .iter()
                            .zip(lq)
                            .map(|(&a, &b)| {
                                let (p, q) = (a.exp(), b.exp());
                                0.5 * (p * (a - b) + p - q)
                            })
                            .collect();
                        let total: f64 = u.iter().sum();
                        for j in 0..k {
                            gl[i * k + j] = scale * (u[j] - lp[j].exp() * total);
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn signed_pow(v: f64, power: f64) -> f64 {
    if power == 1.0 {
        v
    } else {
        v.signum() * v.abs().powf(power)
    }
}

/// `rᵀ P r` for a row-major `d×d` matrix.
pub(crate) fn quad_form(p: &[f64], r: &[f64]) -> f64 {
    let d = r.len();
    let mut s = 0.0;
    for a in 0..d {
        if r[a] == 0.0 {
            continue;
        }
        let pr: f64 = p[a * d..(a + 1) * d].iter().zip(r).map(|(x, y)| x * y).sum();
        s += r[a] * pr;
    }
    s
}

/// Numerically stable `log softmax(z / temperature)`.
pub(crate) fn log_softmax_row(z: &[f64], temperature: f64) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / temperature;
    let lse = z.iter().map(|v| (v / temperature - max).exp()).sum::<f64>().ln() + max;
    z.iter().map(|v| v / temperature - lse).collect()
}

/// `½KL(p‖q) + ½KL(q‖p)` from log-probabilities.
pub(crate) fn js_row(log_p: &[f64], log_q: &[f64]) -> f64 {
    0.5 * log_p.iter().zip(log_q).map(|(&a, &b)| (a.exp() - b.exp()) * (a - b)).sum::<f64>()
}

/// Unfolds one `C×H×W` image into `HW × (C·9)` same-padded patches.
fn im2col(img: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (h, w) = (g.height as isize, g.width as isize);
    let patch = g.patch();
    for y in 0..h {
        for x in 0..w {
            let dst = &mut cols[((y * w + x) as usize) * patch..((y * w + x) as usize + 1) * patch];
            let mut t = 0;
            for c in 0..g.in_channels {
                let base = c * g.height * g.width;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (yy, xx) = (y + dy, x + dx);
                        dst[t] = if yy >= 0 && yy < h && xx >= 0 && xx < w {
                            img[base + (yy * w + xx) as usize]
                        } else {
                            0.0
                        };
                        t += 1;
                    }
                }
            }
        }
    }
}

fn col2im_acc(cols: &[f64], g: &ConvGeom, img: &mut [f64]) {
    let (h, w) = (g.height as isize, g.width as isize);
    let patch = g.patch();
    for y in 0..h {
        for x in 0..w {
            let src = &cols[((y * w + x) as usize) * patch..((y * w + x) as usize + 1) * patch];
            let mut t = 0;
            for c in 0..g.in_channels {
                let base = c * g.height * g.width;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy >= 0 && yy < h && xx >= 0 && xx < w {
                            img[base + (yy * w + xx) as usize] += src[t];
                        }
                        t += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_loss(tape: &mut Tape, v: Var) -> Var {
        tape.sum(v)
    }

    #[test]
    fn backward_without_tape_is_state_error() {
        let mut tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::State(_))));
    }

    #[test]
    fn backward_clears_tape() {
        let mut tape = Tape::new();
        let w = tape.param(ParamId(0), &Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let l = scalar_loss(&mut tape, w);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap(), &[1.0]);
        assert!(tape.is_empty());
        assert!(tape.backward(l).is_err());
    }

    #[test]
    fn linear_loss_gives_outer_product_gradient() {
        // loss = sum(x·W) → ∂/∂W_ij = Σ_n x_ni
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 3, vec![1., 2., 3., -1., 0.5, 4.]).unwrap());
        let w = tape.param(ParamId(7), &Tensor::matrix(3, 2, vec![0.1; 6]).unwrap());
        let y = tape.matmul(x, w).unwrap();
        let l = tape.sum(y);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(ParamId(7)).unwrap(), &[0., 0., 2.5, 2.5, 7., 7.]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(ParamId(0), &Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
        let z = tape.scale(w, 0.0);
        let l = tape.sum(z);
        let g = tape.backward(l).unwrap();
        assert!(g.get(ParamId(0)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_param_gradients_sum() {
        let mut tape = Tape::new();
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let a = tape.param(ParamId(0), &t);
        let b = tape.param(ParamId(0), &t);
        let s = tape.add(a, b).unwrap();
        let l = tape.sum(s);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.get(ParamId(0)).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
        assert!(matches!(tape.cross_entropy(z, &[3]), Err(Error::Parameter(_))));
    }

    #[test]
    fn js_of_identical_distributions_is_zero() {
        let z = vec![0.3, -1.2, 2.0];
        let lq = log_softmax_row(&z, 1.0);
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::matrix(1, 3, z).unwrap());
        let l = tape.js_divergence(zv, lq).unwrap();
        assert!(tape.value(l).item().abs() < 1e-15);
    }

    #[test]
    fn conv_identity_kernel_copies_input() {
        let geom = ConvGeom { in_channels: 1, out_channels: 1, height: 3, width: 4 };
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let img: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 12, img.clone()).unwrap());
        let w = tape.param(ParamId(0), &Tensor::matrix(1, 9, k).unwrap());
        let y = tape.conv2d(x, w, geom).unwrap();
        assert_eq!(tape.value(y).data(), img.as_slice());
    }

    #[test]
    fn max_pool_picks_block_maxima() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 16, (0..16).map(|v| ((v * 7) % 16) as f64).collect()).unwrap());
        let y = tape.max_pool2(x, 1, 4, 4).unwrap();
        // rows: [0,7,14,5],[12,3,10,1],[8,15,6,13],[4,11,2,9]
        assert_eq!(tape.value(y).data(), &[12., 14., 15., 13.]);
    }
}
