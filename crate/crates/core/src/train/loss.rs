//! Training objective: weighted L1 plus a perceptual term computed on a
//! frozen, seed-fixed convolutional feature stack.

use crate::error::Result;
use crate::nn::{add_conv, conv_act, Binder, Init};
use crate::numerics::{Graph, ParamStore, Tensor, Var};

/// Three-stage random feature extractor standing in for pretrained VGG
/// features. Its weights never train.
#[derive(Clone, Debug)]
pub struct PerceptualProxy {
    params: ParamStore,
}

const STAGES: [(usize, usize); 3] = [(3, 8), (8, 16), (16, 32)];

impl PerceptualProxy {
    pub fn new(seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        for (i, &(cin, cout)) in STAGES.iter().enumerate() {
            add_conv(&mut params, seed, &format!("proxy.{i}"), cin, cout, 3, Init::He)?;
        }
        Ok(PerceptualProxy { params })
    }

    fn features(&self, g: &mut Graph, b: &mut Binder, x: Var) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(STAGES.len());
        let mut y = x;
        for i in 0..STAGES.len() {
            if i > 0 {
                y = g.avg_pool2(y)?;
            }
            y = conv_act(g, b, &format!("proxy.{i}"), y, 1)?;
            out.push(y);
        }
        Ok(out)
    }

    /// `Σ_levels mean((φ_l(a) − φ_l(b))²)`.
    pub fn distance(&self, g: &mut Graph, a: Var, b: Var) -> Result<Var> {
        let mut binder = Binder::new(&self.params, false);
        let fa = self.features(g, &mut binder, a)?;
        let fb = self.features(g, &mut binder, b)?;
        let mut total: Option<Var> = None;
        for (x, y) in fa.into_iter().zip(fb) {
            let d = g.mean_squared_diff(x, y)?;
            total = Some(match total {
                Some(t) => g.add(t, d)?,
                None => d,
            });
        }
        Ok(total.expect("at least one stage"))
    }
}

/// Mean over all elements of `w · |pred − target|`, where `weights` is
/// `(N, 1, H, W)` and broadcast over channels.
pub fn weighted_l1(g: &mut Graph, pred: Var, target: Var, weights: &Tensor) -> Result<Var> {
    g.weighted_l1(pred, target, weights)
}

/// `weighted_l1 + w_p · perceptual`; with `w_p = 0` the perceptual term is
/// not evaluated at all.
pub fn total_loss(
    g: &mut Graph,
    pred: Var,
    target: Var,
    weights: &Tensor,
    proxy: &PerceptualProxy,
    w_p: f32,
) -> Result<Var> {
    let l1 = weighted_l1(g, pred, target, weights)?;
    if w_p == 0.0 {
        return Ok(l1);
    }
    let p = proxy.distance(g, pred, target)?;
    let p = g.scale(p, w_p)?;
    g.add(l1, p)
}

/// Nearest-neighbour 2× enlargement of `(N, 1, H, W)` weights to the
/// output resolution.
pub fn upsample_weights(w: &Tensor) -> Result<Tensor> {
    let (n, c, h, wd) = w.dims4()?;
    let mut out = Vec::with_capacity(n * c * 4 * h * wd);
    for plane in 0..n * c {
        for y in 0..2 * h {
            for x in 0..2 * wd {
                out.push(w.data()[(plane * h + y / 2) * wd + x / 2]);
            }
        }
    }
    Tensor::new(&[n, c, 2 * h, 2 * wd], out)
}
