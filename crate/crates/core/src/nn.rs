//! Layer plumbing shared by the network and its modules: binding named
//! parameters onto a graph, convolution layers and seeded initialisation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Graph, ParamStore, Tensor, Var};

/// Slope of every leaky ReLU in the network.
pub const LEAK: f32 = 0.1;

/// Puts parameters on a graph on first use and remembers their handles so
/// gradients can be collected by name afterwards.
pub struct Binder<'a> {
    params: &'a ParamStore,
    trainable: bool,
    vars: BTreeMap<String, Var>,
}

impl<'a> Binder<'a> {
    pub fn new(params: &'a ParamStore, trainable: bool) -> Self {
        Binder {
            params,
            trainable,
            vars: BTreeMap::new(),
        }
    }

    pub fn get(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let value = self.params.get(name)?.clone();
        let v = if self.trainable {
            g.variable(value)
        } else {
            g.constant(value)
        };
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Uses `var` for parameter `name` instead of a copy from the store.
    pub fn bind(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    /// Names bound so far.
    pub fn bound(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Gradients of every bound parameter after `g.backward`; parameters that
    /// did not influence the loss get zeros.
    pub fn grads(&self, g: &Graph) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let grad = g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape()));
                (name.clone(), grad)
            })
            .collect()
    }
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for one named parameter. Seeding by name keeps a layer's
/// initial weights identical across configurations that add or drop other
/// layers.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// He-style normal weights scaled for leaky-ReLU layers.
    He,
    /// Zero weights and bias (residual outputs start as identity).
    Zero,
    /// He weights multiplied by a small gain.
    Scaled(f32),
}

/// Registers `{name}.weight` `(cout, cin, k, k)` and `{name}.bias` `(cout)`.
pub fn add_conv(
    store: &mut ParamStore,
    seed: u64,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    init: Init,
) -> Result<()> {
    let wname = format!("{name}.weight");
    let shape = [cout, cin, k, k];
    let fan_in = (cin * k * k) as f32;
    let std = (2.0 / ((1.0 + LEAK * LEAK) * fan_in)).sqrt();
    let weight = match init {
        Init::Zero => Tensor::zeros(&shape),
        Init::He => Tensor::randn(&shape, std, &mut param_rng(seed, &wname)),
        Init::Scaled(gain) => Tensor::randn(&shape, std * gain, &mut param_rng(seed, &wname)),
    };
    store.insert(wname, weight)?;
    store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]))
}

/// Multiply-accumulates of a `k×k` convolution producing `cout × h × w`.
pub fn conv_macs(cin: usize, cout: usize, k: usize, h: usize, w: usize) -> u64 {
    (k * k * cin * cout * h * w) as u64
}

pub fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

/// Convolution with "same" padding for odd `k`.
pub fn conv(g: &mut Graph, b: &mut Binder, name: &str, x: Var, stride: usize) -> Result<Var> {
    let w = b.get(g, &format!("{name}.weight"))?;
    let bias = b.get(g, &format!("{name}.bias"))?;
    let k = g.value(w).shape()[2];
    g.conv2d(x, w, Some(bias), stride, k / 2)
}

/// Convolution followed by a leaky ReLU.
pub fn conv_act(g: &mut Graph, b: &mut Binder, name: &str, x: Var, stride: usize) -> Result<Var> {
    let y = conv(g, b, name, x, stride)?;
    g.leaky_relu(y, LEAK)
}

/// Minimum over non-overlapping `factor × factor` blocks of an
/// `(N, C, H, W)` tensor: a block is valid only if all of it is.
pub fn min_pool(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(crate::StssError::shape(
            "min_pool",
            format!("{h}x{w} not divisible by {factor}"),
        ));
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut out = vec![f32::INFINITY; n * c * oh * ow];
    for plane in 0..n * c {
        for y in 0..h {
            for xx in 0..w {
                let o = &mut out[(plane * oh + y / factor) * ow + xx / factor];
                *o = o.min(x.data()[(plane * h + y) * w + xx]);
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_init_is_stable() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        add_conv(&mut a, 7, "x.conv", 3, 4, 3, Init::He).unwrap();
        add_conv(&mut b, 7, "other", 2, 2, 1, Init::He).unwrap();
        add_conv(&mut b, 7, "x.conv", 3, 4, 3, Init::He).unwrap();
        assert_eq!(a.get("x.conv.weight").unwrap(), b.get("x.conv.weight").unwrap());
        assert_eq!(conv_params(3, 4, 3), a.total_count());
    }

    #[test]
    fn min_pool_blocks() {
        let t = Tensor::new(&[1, 1, 2, 4], vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(min_pool(&t, 2).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn binder_reuses_vars_and_zero_fills_grads() {
        let mut store = ParamStore::new();
        add_conv(&mut store, 1, "c", 1, 1, 1, Init::He).unwrap();
        store.insert("unused", Tensor::zeros(&[2])).unwrap();
        let mut g = Graph::new();
        let mut b = Binder::new(&store, true);
        let w1 = b.get(&mut g, "c.weight").unwrap();
        let w2 = b.get(&mut g, "c.weight").unwrap();
        assert_eq!(w1, w2);
        let _ = b.get(&mut g, "unused").unwrap();
        let x = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
        let y = conv(&mut g, &mut b, "c", x, 1).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        let grads = b.grads(&g);
        assert_eq!(grads["unused"].data(), &[0.0, 0.0]);
        assert_eq!(grads["c.bias"].data(), &[4.0]);
    }
}
