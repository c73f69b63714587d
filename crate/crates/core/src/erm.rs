//! Efficient reshading module: BRDF and light embeddings fused across a
//! local window by masked ReLU linear attention,
//!
//! `φ(p) = Σ_δ relu(⟨Q(p), K(p+δ)⟩) · V(p+δ)`, with `K = mask·Q` and
//! `V = mask·L`,
//!
//! so hole pixels (including `p` itself) never contribute light.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StssError};
use crate::nn::{add_conv, conv, conv_act, conv_macs, conv_params, Binder, Init};
use crate::numerics::{Graph, ParamStore, Var};
use crate::scene::GB_CHANNELS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErmConfig {
    pub window: usize,
    pub embed_dim: usize,
}

impl Default for ErmConfig {
    fn default() -> Self {
        ErmConfig {
            window: 5,
            embed_dim: 32,
        }
    }
}

impl ErmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 {
            return Err(StssError::Config(format!("erm.window {} must be odd", self.window)));
        }
        if self.embed_dim == 0 {
            return Err(StssError::Config("erm.embed_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Registers the module's parameters for backbone features of
/// `feat_channels` channels.
pub fn add_params(store: &mut ParamStore, seed: u64, cfg: &ErmConfig, feat_channels: usize) -> Result<()> {
    let d = cfg.embed_dim;
    add_conv(store, seed, "erm.q_proj.0", GB_CHANNELS, d, 3, Init::He)?;
    add_conv(store, seed, "erm.q_proj.1", d, d, 1, Init::He)?;
    add_conv(
        store,
        seed,
        "erm.kv_proj.0",
        feat_channels + GB_CHANNELS,
        d,
        3,
        Init::He,
    )?;
    add_conv(store, seed, "erm.kv_proj.1", d, d, 1, Init::He)?;
    add_conv(store, seed, "erm.out_proj", d, feat_channels, 1, Init::Scaled(0.1))
}

pub fn param_count(cfg: &ErmConfig, feat_channels: usize) -> usize {
    let d = cfg.embed_dim;
    conv_params(GB_CHANNELS, d, 3)
        + conv_params(d, d, 1)
        + conv_params(feat_channels + GB_CHANNELS, d, 3)
        + conv_params(d, d, 1)
        + conv_params(d, feat_channels, 1)
}

/// Query, masked key and masked value maps.
#[derive(Clone, Copy, Debug)]
pub struct Embeddings {
    pub q: Var,
    pub k: Var,
    pub v: Var,
}

/// `Q` encodes the G-buffer alone (BRDF embedding); the light embedding
/// encodes backbone features together with the G-buffer. `mask` is
/// `(N, 1, h, w)` at the module's resolution.
pub fn encode_embeddings(g: &mut Graph, b: &mut Binder, features: Var, gbuffer: Var, mask: Var) -> Result<Embeddings> {
    let q = conv_act(g, b, "erm.q_proj.0", gbuffer, 1)?;
    let q = conv(g, b, "erm.q_proj.1", q, 1)?;
    let fg = g.concat_channels(&[features, gbuffer])?;
    let light = conv_act(g, b, "erm.kv_proj.0", fg, 1)?;
    let light = conv(g, b, "erm.kv_proj.1", light, 1)?;
    let k = g.mul_broadcast(q, mask)?;
    let v = g.mul_broadcast(light, mask)?;
    Ok(Embeddings { q, k, v })
}

/// The attention sum itself (no normalisation).
pub fn erm_forward(g: &mut Graph, e: &Embeddings, cfg: &ErmConfig) -> Result<Var> {
    g.window_attention(e.q, e.k, e.v, cfg.window)
}

/// Full module: embeddings, attention, projection and residual add onto
/// `features`. The attention sum is divided by the window area before the
/// projection so its scale does not grow with the window.
pub fn erm_block(
    g: &mut Graph,
    b: &mut Binder,
    cfg: &ErmConfig,
    features: Var,
    gbuffer: Var,
    mask: Var,
) -> Result<Var> {
    let e = encode_embeddings(g, b, features, gbuffer, mask)?;
    let phi = erm_forward(g, &e, cfg)?;
    let phi = g.scale(phi, 1.0 / (cfg.window * cfg.window) as f32)?;
    let out = conv(g, b, "erm.out_proj", phi, 1)?;
    g.add(features, out)
}

/// Multiply-adds of the attention sum: `window²·d` for the scores and
/// `window²·d` for each of the key and value reads, per pixel.
pub fn attention_flops(window: usize, embed_dim: usize, pixels: usize) -> u64 {
    (pixels * window * window * 3 * embed_dim) as u64
}

/// Whole-module cost at an `h × w` module resolution, embeddings included.
pub fn erm_flops(cfg: &ErmConfig, feat_channels: usize, h: usize, w: usize) -> u64 {
    let d = cfg.embed_dim;
    attention_flops(cfg.window, d, h * w)
        + conv_macs(GB_CHANNELS, d, 3, h, w)
        + conv_macs(d, d, 1, h, w)
        + conv_macs(feat_channels + GB_CHANNELS, d, 3, h, w)
        + conv_macs(d, d, 1, h, w)
        + conv_macs(d, feat_channels, 1, h, w)
}
