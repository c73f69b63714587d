//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use stss::numerics::{Graph, Tensor, Var};

/// `φ(p) = Σ_δ relu(⟨q(p), k(p+δ)⟩)·v(p+δ)` by explicit loops over
/// batch, output channel, pixel and window offset; out-of-frame taps
/// contribute nothing.
pub fn window_attention_loop(q: &Tensor, k: &Tensor, v: &Tensor, window: usize) -> Vec<f64> {
    let (n, d, h, w) = (q.shape()[0], q.shape()[1], q.shape()[2], q.shape()[3]);
    let dv = v.shape()[1];
    let r = (window / 2) as isize;
    let at =
        |t: &Tensor, c: usize, b: usize, ch: usize, y: usize, x: usize| t.data()[((b * c + ch) * h + y) * w + x] as f64;
    let mut out = vec![0.0; n * dv * h * w];
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (yy, xx) = (y as isize + dy, x as isize + dx);
                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            continue;
                        }
                        let (yy, xx) = (yy as usize, xx as usize);
                        let mut score = 0.0;
                        for c in 0..d {
                            score += at(q, d, b, c, y, x) * at(k, d, b, c, yy, xx);
                        }
                        let score = score.max(0.0);
                        for c in 0..dv {
                            out[((b * dv + c) * h + y) * w + x] += score * at(v, dv, b, c, yy, xx);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Random binary `(n, 1, h, w)` mask with roughly `p_valid` ones.
pub fn random_mask<R: Rng>(n: usize, h: usize, w: usize, p_valid: f64, rng: &mut R) -> Tensor {
    let data = (0..n * h * w)
        .map(|_| if rng.random_bool(p_valid) { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(&[n, 1, h, w], data).unwrap()
}

/// `window_attention(q, mask·k, mask·v)` through the graph.
pub fn masked_attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: &Tensor, window: usize) -> Tensor {
    let mut g = Graph::new();
    let (q, k, v, m) = (
        g.constant(q.clone()),
        g.constant(k.clone()),
        g.constant(v.clone()),
        g.constant(mask.clone()),
    );
    let km = g.mul_broadcast(k, m).unwrap();
    let vm = g.mul_broadcast(v, m).unwrap();
    let out = g.window_attention(q, km, vm, window).unwrap();
    g.value(out).clone()
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

/// Per input element: whether perturbing it by ±`eps` leaves the sign of
/// every intermediate value unchanged. Elements that flip a sign may straddle
/// a ReLU or |·| kink, where central differences do not estimate the
/// derivative. Uses the forward pass only.
pub fn kink_free_elements<F>(f: &F, inputs: &[Tensor], eps: f32) -> Vec<Vec<bool>>
where
    F: Fn(&mut Graph, &[Var]) -> stss::Result<Var>,
{
    let signs = |probe: &[Tensor]| -> Vec<i8> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.constant(t.clone())).collect();
        f(&mut g, &vars).unwrap();
        g.values()
            .flat_map(|t| t.data().iter().map(|&x| (x > 0.0) as i8 - (x < 0.0) as i8))
            .collect()
    };
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut keep = Vec::with_capacity(inputs[i].len());
        for e in 0..inputs[i].len() {
            let mut probe = inputs.to_vec();
            probe[i].data_mut()[e] += eps;
            let plus = signs(&probe);
            probe[i].data_mut()[e] -= 2.0 * eps;
            keep.push(plus == signs(&probe));
        }
        out.push(keep);
    }
    out
}
