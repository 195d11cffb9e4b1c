//! Recording tape for reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value. Nodes are created in
//! topological order, so backward is a single reverse sweep. A graph may be
//! differentiated once; its activations are released during the sweep.

use super::kernels::{self, BatchStats, ConvGeom, PoolGeom};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
        training: bool,
    },
    Silu {
        x: Var,
        sigmoid: Vec<f32>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    Upsample2x(Var),
    Concat(Vec<Var>),
    Add(Var, Var),
    WeightedSum {
        x: Var,
        weights: Vec<f32>,
    },
    /// Scalar whose partial derivatives were computed by the caller.
    External {
        inputs: Vec<Var>,
        partials: Vec<Vec<f32>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Batch-norm settings shared by every normalization layer.
#[derive(Debug, Clone, Copy)]
pub struct BnConfig {
    pub eps: f32,
    pub momentum: f32,
}

impl Default for BnConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            momentum: 0.03,
        }
    }
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if self.consumed {
            return Err(Error::Graph(
                "graph already differentiated; record a new forward pass".into(),
            ));
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0]
            .value
            .as_ref()
            .expect("value released by backward")
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, false)
    }

    /// Leaf bound to a stored parameter. Gradients land in the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let p = store.get(id);
        let mut t = Tensor::new(p.tensor.shape(), p.tensor.data().to_vec())?;
        t = t.with_requires_grad(p.trainable());
        let needs = p.trainable();
        self.push(t, Op::Param(id), needs)
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (n, c, h, wd) = self.value(x).dims4()?;
        let (k, wc, kh, kw) = self.value(w).dims4()?;
        if c != wc {
            return Err(Error::Shape(format!(
                "conv2d: input {:?} has {c} channels but weight {:?} expects {wc}",
                self.value(x).shape(),
                self.value(w).shape()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d: stride must be ≥ 1".into()));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [k] {
                return Err(Error::Shape(format!(
                    "conv2d: bias {:?} for {k} output channels",
                    self.value(b).shape()
                )));
            }
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::Shape(format!(
                "conv2d: kernel {kh}×{kw} larger than padded input {:?} (pad {pad}); zero-sized output",
                self.value(x).shape()
            )));
        }
        let geom = ConvGeom {
            batch: n,
            in_c: c,
            in_h: h,
            in_w: wd,
            out_c: k,
            kh,
            kw,
            stride,
            pad,
        };
        let out = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let t = Tensor::new(&[n, k, geom.out_h(), geom.out_w()], out)?;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(t, Op::Conv2d { x, w, b, geom }, needs)
    }

    /// Batch normalization over N, H, W. In training mode the batch
    /// statistics are used and returned so the caller can fold them into
    /// its running estimates; in eval mode `running` is used as-is.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f32],
        running_var: &[f32],
        eps: f32,
        training: bool,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if eps <= 0.0 {
            return Err(Error::InvalidArgument(
                "batch_norm2d: eps must be > 0".into(),
            ));
        }
        for (what, len) in [
            ("gamma", self.value(gamma).numel()),
            ("beta", self.value(beta).numel()),
            ("running_mean", running_mean.len()),
            ("running_var", running_var.len()),
        ] {
            if len != c {
                return Err(Error::Shape(format!(
                    "batch_norm2d: {what} has {len} entries for {c} channels"
                )));
            }
        }
        let plane = h * w;
        let (mean, var, stats) = if training {
            if n * plane < 2 {
                return Err(Error::InvalidArgument(
                    "batch_norm2d: training mode needs at least 2 values per channel".into(),
                ));
            }
            let s = kernels::channel_stats(self.value(x).data(), n, c, plane);
            (s.mean.clone(), s.var.clone(), Some(s))
        } else {
            (running_mean.to_vec(), running_var.to_vec(), None)
        };
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let y = kernels::normalize_affine(
            self.value(x).data(),
            n,
            c,
            plane,
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let t = Tensor::new(&[n, c, h, w], y)?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            },
            needs,
        )?;
        Ok((v, stats))
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let sigmoid: Vec<f32> = xv.data().iter().map(|&v| kernels::sigmoid(v)).collect();
        let y: Vec<f32> = xv
            .data()
            .iter()
            .zip(&sigmoid)
            .map(|(&v, &s)| v * s)
            .collect();
        let t = Tensor::new(xv.shape(), y)?;
        let needs = self.needs(x);
        self.push(t, Op::Silu { x, sigmoid }, needs)
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if k == 0 || stride == 0 {
            return Err(Error::InvalidArgument(
                "maxpool2d: kernel and stride must be ≥ 1".into(),
            ));
        }
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(Error::Shape(format!(
                "maxpool2d: window {k} larger than padded input {h}×{w} (pad {pad})"
            )));
        }
        if pad >= k {
            return Err(Error::InvalidArgument(format!(
                "maxpool2d: pad {pad} must be smaller than window {k}"
            )));
        }
        let geom = PoolGeom {
            batch: n,
            channels: c,
            in_h: h,
            in_w: w,
            k,
            stride,
            pad,
        };
        let (y, argmax) = kernels::maxpool_forward(&geom, self.value(x).data());
        let t = Tensor::new(&[n, c, geom.out_h(), geom.out_w()], y)?;
        let needs = self.needs(x);
        self.push(t, Op::MaxPool { x, argmax }, needs)
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let y = kernels::upsample_nearest2x(self.value(x).data(), n * c, h, w);
        let t = Tensor::new(&[n, c, 2 * h, 2 * w], y)?;
        let needs = self.needs(x);
        self.push(t, Op::Upsample2x(x), needs)
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_channels: no inputs".into()))?;
        let (n, _, h, w) = self.value(*first).dims4()?;
        let mut total_c = 0;
        for (i, &v) in xs.iter().enumerate() {
            let (ni, ci, hi, wi) = self.value(v).dims4()?;
            if (ni, hi, wi) != (n, h, w) {
                return Err(Error::Shape(format!(
                    "concat_channels: input {i} has shape {:?}, expected N={n} H={h} W={w}",
                    self.value(v).shape()
                )));
            }
            total_c += ci;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for &v in xs {
                let t = self.value(v);
                let ci = t.shape()[1];
                out.extend_from_slice(&t.data()[b * ci * plane..(b + 1) * ci * plane]);
            }
        }
        let t = Tensor::new(&[n, total_c, h, w], out)?;
        let needs = xs.iter().any(|&v| self.needs(v));
        self.push(t, Op::Concat(xs.to_vec()), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "add: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let y: Vec<f32> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(ta.shape(), y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Add(a, b), needs)
    }

    /// `Σ weights[i]·x[i]`, a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f32>) -> Result<Var> {
        let xv = self.value(x);
        if weights.len() != xv.numel() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} weights for tensor {:?}",
                weights.len(),
                xv.shape()
            )));
        }
        let s: f64 = xv
            .data()
            .iter()
            .zip(&weights)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(s as f32),
            Op::WeightedSum { x, weights },
            needs,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        self.weighted_sum(x, vec![1.0; n])
    }

    /// Scalar node computed outside the tape, with its partial derivatives
    /// with respect to each input.
    pub fn external_scalar(
        &mut self,
        inputs: &[Var],
        value: f32,
        partials: Vec<Vec<f32>>,
    ) -> Result<Var> {
        if inputs.len() != partials.len() {
            return Err(Error::InvalidArgument(
                "external_scalar: one partial per input required".into(),
            ));
        }
        for (i, (&v, p)) in inputs.iter().zip(&partials).enumerate() {
            if self.value(v).numel() != p.len() {
                return Err(Error::Shape(format!(
                    "external_scalar: partial {i} has {} entries for tensor {:?}",
                    p.len(),
                    self.value(v).shape()
                )));
            }
        }
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(
            Tensor::scalar(value),
            Op::External {
                inputs: inputs.to_vec(),
                partials,
            },
            needs,
        )
    }

    /// Reverse sweep from a scalar `loss`, accumulating into the gradient
    /// buffers of every reachable parameter in `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.consumed {
            return Err(Error::Graph(
                "backward called twice on the same forward pass".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else {
                self.nodes[i].value = None;
                continue;
            };
            if !self.nodes[i].needs_grad {
                self.nodes[i].value = None;
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Input);
            let emit =
                |v: Var, g: Vec<f32>, grads: &mut Vec<Option<Vec<f32>>>| match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                };
            match &op {
                Op::Input => {}
                Op::Param(id) => store.get_mut(*id).tensor.accumulate_grad(&gy)?,
                Op::Conv2d { x, w, b, geom } => {
                    let need_dx = self.needs(*x);
                    let cg = kernels::conv2d_backward(
                        geom,
                        self.value(*x).data(),
                        self.value(*w).data(),
                        &gy,
                        need_dx,
                    );
                    if let Some(dx) = cg.dx {
                        emit(*x, dx, &mut grads);
                    }
                    if self.needs(*w) {
                        emit(*w, cg.dw, &mut grads);
                    }
                    if let Some(b) = b {
                        if self.needs(*b) {
                            emit(*b, cg.db, &mut grads);
                        }
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                    training,
                } => {
                    let (dx, dg, db) = bn_backward(
                        self.value(*x),
                        self.value(*gamma).data(),
                        mean,
                        inv_std,
                        *training,
                        &gy,
                    )?;
                    if self.needs(*x) {
                        emit(*x, dx, &mut grads);
                    }
                    if self.needs(*gamma) {
                        emit(*gamma, dg, &mut grads);
                    }
                    if self.needs(*beta) {
                        emit(*beta, db, &mut grads);
                    }
                }
                Op::Silu { x, sigmoid } => {
                    let dx = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(sigmoid)
                        .zip(&gy)
                        .map(|((&v, &s), &g)| g * s * (1.0 + v * (1.0 - s)))
                        .collect();
                    emit(*x, dx, &mut grads);
                }
                Op::MaxPool { x, argmax } => {
                    let mut dx = vec![0.0f32; self.value(*x).numel()];
                    for (&a, &g) in argmax.iter().zip(&gy) {
                        dx[a as usize] += g;
                    }
                    emit(*x, dx, &mut grads);
                }
                Op::Upsample2x(x) => {
                    let (n, c, h, w) = self.value(*x).dims4()?;
                    emit(
                        *x,
                        kernels::upsample_nearest2x_backward(&gy, n * c, h, w),
                        &mut grads,
                    );
                }
                Op::Concat(xs) => {
                    let (n, total_c, h, w) = self.value(Var(i)).dims4()?;
                    let plane = h * w;
                    let mut offset = 0;
                    for &v in xs {
                        let ci = self.value(v).shape()[1];
                        if self.needs(v) {
                            let mut g = Vec::with_capacity(n * ci * plane);
                            for b in 0..n {
                                let start = (b * total_c + offset) * plane;
                                g.extend_from_slice(&gy[start..start + ci * plane]);
                            }
                            emit(v, g, &mut grads);
                        }
                        offset += ci;
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        emit(*a, gy.clone(), &mut grads);
                    }
                    if self.needs(*b) {
                        emit(*b, gy.clone(), &mut grads);
                    }
                }
                Op::WeightedSum { x, weights } => {
                    let g0 = gy[0];
                    emit(*x, weights.iter().map(|w| w * g0).collect(), &mut grads);
                }
                Op::External { inputs, partials } => {
                    let g0 = gy[0];
                    for (&v, p) in inputs.iter().zip(partials) {
                        if self.needs(v) {
                            emit(v, p.iter().map(|d| d * g0).collect(), &mut grads);
                        }
                    }
                }
            }
            self.nodes[i].value = None;
        }
        for node in &mut self.nodes {
            node.value = None;
        }
        Ok(())
    }
}

fn bn_backward(
    x: &Tensor,
    gamma: &[f32],
    mean: &[f32],
    inv_std: &[f32],
    training: bool,
    gy: &[f32],
) -> Result<(Vec<f32>, Vec<f32>, Vec<f32>)> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let xd = x.data();
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    let mut dx = vec![0.0f32; xd.len()];
    let count = (n * plane) as f64;
    for ch in 0..c {
        let (m, s) = (mean[ch], inv_std[ch]);
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            // f32 partial sums per plane, f64 across planes
            let (mut pg, mut pgx) = (0.0f32, 0.0f32);
            for (&xv, &g) in xd[off..off + plane].iter().zip(&gy[off..off + plane]) {
                pg += g;
                pgx += g * (xv - m);
            }
            sum_g += pg as f64;
            sum_gx += pgx as f64 * s as f64;
        }
        dgamma[ch] = sum_gx as f32;
        dbeta[ch] = sum_g as f32;
        let scale = gamma[ch] * s;
        let mean_g = (sum_g / count) as f32;
        let mean_gx = (sum_gx / count) as f32;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            let (xs, gs) = (&xd[off..off + plane], &gy[off..off + plane]);
            for ((d, &xv), &g) in dx[off..off + plane].iter_mut().zip(xs).zip(gs) {
                *d = if training {
                    scale * (g - mean_g - (xv - m) * s * mean_gx)
                } else {
                    scale * g
                };
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}
