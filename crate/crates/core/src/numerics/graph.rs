//! Tape-based reverse-mode differentiation over the fixed operator set.

use crate::error::{Result, StssError};

use super::kernels;
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Relu(Var),
    LeakyRelu(Var, f32),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    MulBroadcast {
        x: Var,
        mask: Var,
    },
    Concat(Vec<Var>),
    AvgPool2(Var),
    Upsample2(Var),
    PixelUnshuffle(Var, usize),
    WindowAttention {
        q: Var,
        k: Var,
        v: Var,
        window: usize,
    },
    WeightedL1 {
        pred: Var,
        target: Var,
        weights: Tensor,
    },
    MeanSquaredDiff(Var, Var),
    Sum(Var),
    Dot(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// A single forward pass. Values are appended as ops run; [`Graph::backward`]
/// walks the tape in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn ensure_finite(t: &Tensor, op: &'static str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(StssError::NonFinite(op))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(StssError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
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

    /// Values of every recorded node, in creation order.
    pub fn values(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes.iter().map(|n| &n.value)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        ensure_finite(&value, name)?;
        let requires_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let out = kernels::conv2d_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        self.push_checked(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            "conv2d",
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push_checked(out, Op::Relu(x), "relu")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Result<Var> {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push_checked(out, Op::LeakyRelu(x, slope), "leaky_relu")
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(op, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        self.push_checked(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        self.push_checked(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        self.push_checked(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        self.push_checked(out, Op::Scale(x, s), "scale")
    }

    /// Multiplies every channel of `x (N, C, H, W)` by `mask (N, 1, H, W)`.
    pub fn mul_broadcast(&mut self, x: Var, mask: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let (mn, mc, mh, mw) = self.value(mask).dims4()?;
        if (mn, mc, mh, mw) != (n, 1, h, w) {
            return Err(StssError::shape(
                "mul_broadcast",
                format!("{:?} vs mask {:?}", self.value(x).shape(), self.value(mask).shape()),
            ));
        }
        let plane = h * w;
        let (xd, md) = (self.value(x).data(), self.value(mask).data());
        let mut out = vec![0.0f32; xd.len()];
        for b in 0..n {
            let m = &md[b * plane..(b + 1) * plane];
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    out[base + i] = xd[base + i] * m[i];
                }
            }
        }
        let out = Tensor::new(&[n, c, h, w], out)?;
        self.push_checked(out, Op::MulBroadcast { x, mask }, "mul_broadcast")
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| StssError::shape("concat_channels", "nothing to concatenate"))?;
        let (n, _, h, w) = self.value(*first).dims4()?;
        let mut total_c = 0;
        for &p in parts {
            let (pn, pc, ph, pw) = self.value(p).dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(StssError::shape(
                    "concat_channels",
                    format!("{:?} vs {:?}", self.value(*first).shape(), self.value(p).shape()),
                ));
            }
            total_c += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for &p in parts {
                let t = self.value(p);
                let pc = t.shape()[1];
                data.extend_from_slice(&t.data()[b * pc * plane..(b + 1) * pc * plane]);
            }
        }
        let out = Tensor::new(&[n, total_c, h, w], data)?;
        self.push_checked(out, Op::Concat(parts.to_vec()), "concat_channels")
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let out = kernels::avg_pool2_forward(self.value(x))?;
        self.push_checked(out, Op::AvgPool2(x), "avg_pool2")
    }

    pub fn upsample_bilinear2(&mut self, x: Var) -> Result<Var> {
        let out = kernels::upsample_bilinear2_forward(self.value(x))?;
        self.push_checked(out, Op::Upsample2(x), "upsample_bilinear2")
    }

    pub fn pixel_unshuffle(&mut self, x: Var, factor: usize) -> Result<Var> {
        let out = kernels::pixel_unshuffle_forward(self.value(x), factor)?;
        self.push_checked(out, Op::PixelUnshuffle(x, factor), "pixel_unshuffle")
    }

    /// Windowed ReLU linear attention; see [`kernels::window_attention_forward`].
    pub fn window_attention(&mut self, q: Var, k: Var, v: Var, window: usize) -> Result<Var> {
        for t in [q, k, v] {
            ensure_finite(self.value(t), "window_attention input")?;
        }
        let out = kernels::window_attention_forward(self.value(q), self.value(k), self.value(v), window)?;
        self.push_checked(out, Op::WindowAttention { q, k, v, window }, "window_attention")
    }

    /// Mean over all elements of `w · |pred − target|`, with `weights` of shape
    /// `(N, 1, H, W)` broadcast across channels.
    pub fn weighted_l1(&mut self, pred: Var, target: Var, weights: &Tensor) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape("weighted_l1", p, t)?;
        let (n, c, h, w) = p.dims4()?;
        if weights.shape() != [n, 1, h, w] {
            return Err(StssError::shape(
                "weighted_l1",
                format!("weights {:?} for prediction {:?}", weights.shape(), p.shape()),
            ));
        }
        let plane = h * w;
        let mut acc = 0.0f64;
        for b in 0..n {
            let wb = &weights.data()[b * plane..(b + 1) * plane];
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    acc += (wb[i] * (p.data()[base + i] - t.data()[base + i]).abs()) as f64;
                }
            }
        }
        let out = Tensor::scalar((acc / p.len() as f64) as f32);
        self.push_checked(
            out,
            Op::WeightedL1 {
                pred,
                target,
                weights: weights.clone(),
            },
            "weighted_l1",
        )
    }

    /// Mean over all elements of `(a − b)²`.
    pub fn mean_squared_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("mean_squared_diff", ta, tb)?;
        let acc: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| ((x - y) as f64).powi(2))
            .sum();
        let out = Tensor::scalar((acc / ta.len() as f64) as f32);
        self.push_checked(out, Op::MeanSquaredDiff(a, b), "mean_squared_diff")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum() as f32);
        self.push_checked(out, Op::Sum(x), "sum")
    }

    /// `Σ x·r` for a fixed tensor `r`.
    pub fn dot(&mut self, x: Var, r: &Tensor) -> Result<Var> {
        same_shape("dot", self.value(x), r)?;
        let acc: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(r.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let out = Tensor::scalar(acc as f32);
        self.push_checked(out, Op::Dot(x, r.clone()), "dot")
    }

    fn parents(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, weight, bias, ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::Relu(x)
            | Op::LeakyRelu(x, _)
            | Op::Scale(x, _)
            | Op::AvgPool2(x)
            | Op::Upsample2(x)
            | Op::PixelUnshuffle(x, _)
            | Op::Sum(x)
            | Op::Dot(x, _) => vec![*x],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MeanSquaredDiff(a, b) => {
                vec![*a, *b]
            }
            Op::MulBroadcast { x, mask } => vec![*x, *mask],
            Op::Concat(parts) => parts.clone(),
            Op::WindowAttention { q, k, v, .. } => vec![*q, *k, *v],
            Op::WeightedL1 { pred, target, .. } => vec![*pred, *target],
        }
    }

    fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from the scalar `loss`, storing gradients on every
    /// node that requires them. Earlier gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(StssError::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            for (parent, pg) in self.local_grads(idx, &op, &g)? {
                if self.nodes[parent.0].requires_grad {
                    Self::accumulate(&mut grads, parent, pg);
                }
            }
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, op: &Op, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let out = &self.nodes[idx].value;
        let val = |v: &Var| &self.nodes[v.0].value;
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        Ok(match op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let (gi, gw, gb) =
                    kernels::conv2d_backward(val(input), val(weight), g, *stride, *padding, needs(input))?;
                let mut v = vec![(*input, gi), (*weight, gw)];
                if let Some(b) = bias {
                    v.push((*b, gb));
                }
                v
            }
            Op::Relu(x) => {
                let data = val(x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                vec![(*x, Tensor::new(g.shape(), data)?)]
            }
            Op::LeakyRelu(x, slope) => {
                let data = val(x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| if xv > 0.0 { gv } else { slope * gv })
                    .collect();
                vec![(*x, Tensor::new(g.shape(), data)?)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let ga = self.elementwise(g, val(b), |x, y| x * y)?;
                let gb = self.elementwise(g, val(a), |x, y| x * y)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, s) => vec![(*x, g.map(|v| v * s))],
            Op::MulBroadcast { x, mask } => {
                let (n, c, h, w) = g.dims4()?;
                let plane = h * w;
                let (xd, md, gd) = (val(x).data(), val(mask).data(), g.data());
                let mut gx = vec![0.0f32; gd.len()];
                let mut gm = vec![0.0f32; n * plane];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            gx[base + i] = gd[base + i] * md[b * plane + i];
                            gm[b * plane + i] += gd[base + i] * xd[base + i];
                        }
                    }
                }
                let mut v = vec![(*x, Tensor::new(val(x).shape(), gx)?)];
                if needs(mask) {
                    v.push((*mask, Tensor::new(val(mask).shape(), gm)?));
                }
                v
            }
            Op::Concat(parts) => {
                let (n, total_c, h, w) = g.dims4()?;
                let plane = h * w;
                let mut offset = 0;
                let mut v = Vec::with_capacity(parts.len());
                for p in parts {
                    let pc = val(p).shape()[1];
                    let mut data = Vec::with_capacity(n * pc * plane);
                    for b in 0..n {
                        let start = (b * total_c + offset) * plane;
                        data.extend_from_slice(&g.data()[start..start + pc * plane]);
                    }
                    v.push((*p, Tensor::new(&[n, pc, h, w], data)?));
                    offset += pc;
                }
                v
            }
            Op::AvgPool2(x) => vec![(*x, kernels::avg_pool2_backward(val(x).shape(), g)?)],
            Op::Upsample2(x) => vec![(*x, kernels::upsample_bilinear2_backward(val(x).shape(), g)?)],
            Op::PixelUnshuffle(x, f) => vec![(*x, kernels::pixel_unshuffle_backward(val(x).shape(), g, *f)?)],
            Op::WindowAttention { q, k, v, window } => {
                let (gq, gk, gv) = kernels::window_attention_backward(val(q), val(k), val(v), g, *window)?;
                vec![(*q, gq), (*k, gk), (*v, gv)]
            }
            Op::WeightedL1 { pred, target, weights } => {
                let (p, t) = (val(pred), val(target));
                let (n, c, h, w) = p.dims4()?;
                let plane = h * w;
                let scale = g.data()[0] / p.len() as f32;
                let mut gp = vec![0.0f32; p.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            let d = p.data()[base + i] - t.data()[base + i];
                            let sign = if d > 0.0 {
                                1.0
                            } else if d < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            gp[base + i] = scale * weights.data()[b * plane + i] * sign;
                        }
                    }
                }
                let gp = Tensor::new(p.shape(), gp)?;
                let gt = gp.map(|v| -v);
                vec![(*pred, gp), (*target, gt)]
            }
            Op::MeanSquaredDiff(a, b) => {
                let scale = 2.0 * g.data()[0] / val(a).len() as f32;
                let ga = self.elementwise(val(a), val(b), |x, y| scale * (x - y))?;
                let gb = ga.map(|v| -v);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(val(x).shape(), g.data()[0]))],
            Op::Dot(x, r) => vec![(*x, r.map(|v| v * g.data()[0]))],
        })
        .map(|v| {
            debug_assert!(v.iter().all(|(p, t)| t.shape() == val(p).shape()), "{out:?}");
            v
        })
    }

    fn elementwise(&self, a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape(), data)
    }
}
