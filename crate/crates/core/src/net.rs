//! The shared supersampling/extrapolation network: a U-Net backbone with
//! the reshading module at its deepest level, a history branch fused into
//! the decoder, and an upsampling head that predicts a residual over the
//! bilinearly enlarged warped current frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::erm::{self, ErmConfig};
use crate::error::{Result, StssError};
use crate::nn::{add_conv, conv, conv_act, conv_macs, min_pool, Binder, Init};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::rrm::PRIMARY_MASK;
use crate::scene::GB_CHANNELS;
use crate::warp::{HISTORY_CHANNELS, NET_INPUT_CHANNELS};

/// Channels seen by the backbone: masked copy ⊕ original copy.
pub const AUGMENTED_CHANNELS: usize = 2 * NET_INPUT_CHANNELS;
/// Offset of the original copy's G-buffer and warped current frame.
const ORIGINAL_GB: usize = NET_INPUT_CHANNELS + 9;
const ORIGINAL_WARP0: usize = NET_INPUT_CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePreset {
    Desk,
    Paper,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub preset: ScalePreset,
    /// Output widths of the encoder levels; level `i` runs at `1/2^i` of the
    /// input resolution.
    pub encoder: Vec<usize>,
    /// Output widths of the decoder levels (same length; the last entry is
    /// the 1×1 bottleneck refinement after the reshading module).
    pub decoder: Vec<usize>,
    /// Width of the history branch; 0 disables it.
    pub history: usize,
    /// Decoder level at which history features are concatenated.
    pub history_level: usize,
    /// Width of the hidden layer of the upsampling head.
    pub head: usize,
    pub use_erm: bool,
    pub erm: ErmConfig,
    pub upscale_factor: usize,
    /// Seed of the per-name parameter initialisation.
    pub init_seed: u64,
}

impl NetConfig {
    pub fn desk() -> Self {
        NetConfig {
            preset: ScalePreset::Desk,
            encoder: vec![24, 32, 48],
            decoder: vec![24, 32, 48],
            history: 16,
            history_level: 1,
            head: 16,
            use_erm: true,
            erm: ErmConfig {
                window: 5,
                embed_dim: 32,
            },
            upscale_factor: 2,
            init_seed: 0x5715,
        }
    }

    /// Widths chosen for about 417 K parameters with the attention module
    /// costing about 11% of the backbone's multiply-adds.
    pub fn paper() -> Self {
        NetConfig {
            preset: ScalePreset::Paper,
            encoder: vec![16, 32, 128],
            decoder: vec![16, 48, 128],
            history: 16,
            history_level: 1,
            head: 8,
            use_erm: true,
            erm: ErmConfig {
                window: 5,
                embed_dim: 64,
            },
            upscale_factor: 2,
            init_seed: 0x5715,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(StssError::Config(m));
        if self.upscale_factor != 2 {
            return bad(format!("upscale_factor must be 2, got {}", self.upscale_factor));
        }
        if self.encoder.len() < 2 || self.encoder.len() != self.decoder.len() {
            return bad("encoder and decoder need the same length (at least 2)".into());
        }
        if self.encoder.iter().chain(&self.decoder).any(|&c| c == 0) || self.head == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.history > 0 && self.history_level + 1 >= self.encoder.len() {
            return bad(format!(
                "history_level {} must be below the bottleneck level {}",
                self.history_level,
                self.encoder.len() - 1
            ));
        }
        if self.use_erm {
            self.erm.validate()?;
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.encoder.len()
    }

    /// Input extents must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.levels() - 1)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| StssError::Config(format!("net config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: NetConfig = toml::from_str(text).map_err(|e| StssError::Config(format!("net config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Res {
    /// `1/2^i` of the input resolution.
    Level(usize),
    /// Output resolution (2× input).
    Output,
}

#[derive(Clone, Debug)]
struct Layer {
    name: String,
    cin: usize,
    cout: usize,
    k: usize,
    res: Res,
    init: Init,
}

fn layer(name: String, cin: usize, cout: usize, k: usize, res: Res) -> Layer {
    Layer {
        name,
        cin,
        cout,
        k,
        res,
        init: Init::He,
    }
}

fn backbone_layers(cfg: &NetConfig) -> Vec<Layer> {
    let l = cfg.levels();
    let mut out = Vec::new();
    let mut cin = AUGMENTED_CHANNELS;
    for (i, &c) in cfg.encoder.iter().enumerate() {
        out.push(layer(format!("backbone.enc{i}.0"), cin, c, 3, Res::Level(i)));
        out.push(layer(format!("backbone.enc{i}.1"), c, c, 3, Res::Level(i)));
        cin = c;
    }
    out.push(layer(
        "backbone.mid".into(),
        cin,
        cfg.decoder[l - 1],
        1,
        Res::Level(l - 1),
    ));
    let mut below = cfg.decoder[l - 1];
    for i in (0..l - 1).rev() {
        let mut cin = below + cfg.encoder[i];
        if cfg.history > 0 && i == cfg.history_level {
            cin += cfg.history;
        }
        let c = cfg.decoder[i];
        out.push(layer(format!("backbone.dec{i}"), cin, c, 3, Res::Level(i)));
        below = c;
    }
    out.push(layer("backbone.head.0".into(), below, cfg.head, 3, Res::Output));
    let mut last = layer("backbone.head.1".into(), cfg.head, 3, 3, Res::Output);
    last.init = Init::Zero;
    out.push(last);
    out
}

fn history_layers(cfg: &NetConfig) -> Vec<Layer> {
    if cfg.history == 0 {
        return Vec::new();
    }
    let (h, lvl) = (cfg.history, cfg.history_level);
    vec![
        layer("history.0".into(), HISTORY_CHANNELS, h, 3, Res::Level(0)),
        layer("history.1".into(), h, h, 3, Res::Level(lvl)),
        layer("history.2".into(), h, h, 3, Res::Level(lvl)),
    ]
}

pub fn init_params(cfg: &NetConfig) -> Result<ParamStore> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    for l in backbone_layers(cfg).iter().chain(&history_layers(cfg)) {
        add_conv(&mut store, cfg.init_seed, &l.name, l.cin, l.cout, l.k, l.init)?;
    }
    if cfg.use_erm {
        erm::add_params(&mut store, cfg.init_seed, &cfg.erm, cfg.encoder[cfg.levels() - 1])?;
    }
    Ok(store)
}

/// Per-component totals; `total` is exactly the sum of the parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Breakdown {
    pub backbone: u64,
    pub history: u64,
    pub erm: u64,
    pub total: u64,
}

impl Breakdown {
    fn new(backbone: u64, history: u64, erm: u64) -> Self {
        Breakdown {
            backbone,
            history,
            erm,
            total: backbone + history + erm,
        }
    }
}

pub fn count_params(cfg: &NetConfig) -> Result<Breakdown> {
    let store = init_params(cfg)?;
    let b = Breakdown::new(
        store.count_with_prefix("backbone.") as u64,
        store.count_with_prefix("history.") as u64,
        store.count_with_prefix("erm.") as u64,
    );
    debug_assert_eq!(b.total, store.total_count() as u64);
    Ok(b)
}

/// Multiply-adds of one forward pass on an `height × width` LR input.
pub fn count_flops(cfg: &NetConfig, height: usize, width: usize) -> Result<Breakdown> {
    cfg.validate()?;
    let dims = |r: Res| match r {
        Res::Level(i) => (height >> i, width >> i),
        Res::Output => (2 * height, 2 * width),
    };
    let sum = |layers: Vec<Layer>| -> u64 {
        layers
            .iter()
            .map(|l| {
                let (h, w) = dims(l.res);
                conv_macs(l.cin, l.cout, l.k, h, w)
            })
            .sum()
    };
    let erm = if cfg.use_erm {
        let (h, w) = dims(Res::Level(cfg.levels() - 1));
        erm::erm_flops(&cfg.erm, cfg.encoder[cfg.levels() - 1], h, w)
    } else {
        0
    };
    Ok(Breakdown::new(sum(backbone_layers(cfg)), sum(history_layers(cfg)), erm))
}

/// Forward pass. `input` is the `(N, 42, H, W)` augmented input and
/// `history` the `(N, 12, H, W)` history stack; returns `(N, 3, 2H, 2W)`.
pub fn forward(g: &mut Graph, b: &mut Binder, cfg: &NetConfig, input: Var, history: Var) -> Result<Var> {
    let (n, c, h, w) = g.value(input).dims4()?;
    if c != AUGMENTED_CHANNELS {
        return Err(StssError::Config(format!(
            "network expects {AUGMENTED_CHANNELS} input channels, got {c}"
        )));
    }
    let (hn, hc, hh, hw) = g.value(history).dims4()?;
    if (hn, hc, hh, hw) != (n, HISTORY_CHANNELS, h, w) {
        return Err(StssError::Config(format!(
            "history must be {n}x{HISTORY_CHANNELS}x{h}x{w}, got {hn}x{hc}x{hh}x{hw}"
        )));
    }
    let m = cfg.size_multiple();
    if h % m != 0 || w % m != 0 {
        return Err(StssError::Config(format!("input {h}x{w} not divisible by {m}")));
    }
    let l = cfg.levels();

    let mut skips = Vec::with_capacity(l);
    let mut x = input;
    for i in 0..l {
        if i > 0 {
            x = g.avg_pool2(x)?;
        }
        x = conv_act(g, b, &format!("backbone.enc{i}.0"), x, 1)?;
        x = conv_act(g, b, &format!("backbone.enc{i}.1"), x, 1)?;
        skips.push(x);
    }

    if cfg.use_erm {
        let full = g.value(input);
        let mut gb = full.channels(ORIGINAL_GB, GB_CHANNELS)?;
        for _ in 1..l {
            gb = crate::numerics::kernels::avg_pool2_forward(&gb)?;
        }
        let mask = min_pool(&full.channels(PRIMARY_MASK, 1)?, m)?;
        let gb = g.constant(gb);
        let mask = g.constant(mask);
        x = erm::erm_block(g, b, &cfg.erm, x, gb, mask)?;
    }
    x = conv_act(g, b, "backbone.mid", x, 1)?;

    let hist = if cfg.history > 0 {
        let mut y = conv_act(g, b, "history.0", history, 1)?;
        for _ in 0..cfg.history_level {
            y = g.avg_pool2(y)?;
        }
        y = conv_act(g, b, "history.1", y, 1)?;
        Some(conv_act(g, b, "history.2", y, 1)?)
    } else {
        None
    };

    for i in (0..l - 1).rev() {
        let up = g.upsample_bilinear2(x)?;
        let mut parts = vec![up, skips[i]];
        if i == cfg.history_level {
            if let Some(hf) = hist {
                parts.push(hf);
            }
        }
        x = g.concat_channels(&parts)?;
        x = conv_act(g, b, &format!("backbone.dec{i}"), x, 1)?;
    }

    x = g.upsample_bilinear2(x)?;
    x = conv_act(g, b, "backbone.head.0", x, 1)?;
    let residual = conv(g, b, "backbone.head.1", x, 1)?;
    let base = baseline_upsample(g.value(input))?;
    let base = g.constant(base);
    g.add(base, residual)
}

/// The non-learned prediction: bilinear 2× enlargement of the warped current
/// frame (holes stay black).
pub fn baseline_upsample(input: &Tensor) -> Result<Tensor> {
    let warp0 = input.channels(ORIGINAL_WARP0, 3)?;
    crate::numerics::kernels::upsample_bilinear2_forward(&warp0)
}

/// Writes `params` to `path` and the configuration to `path` + `.toml`.
pub fn save_checkpoint(path: &Path, cfg: &NetConfig, params: &ParamStore) -> Result<()> {
    params.save(path)?;
    let side = sidecar(path);
    std::fs::write(&side, cfg.to_toml()?).map_err(|e| StssError::io(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(NetConfig, ParamStore)> {
    let side = sidecar(path);
    let text = std::fs::read_to_string(&side).map_err(|e| StssError::io(&side, e))?;
    let cfg = NetConfig::from_toml(&text)?;
    let params = ParamStore::load(path)?;
    let expected = init_params(&cfg)?;
    for (name, t) in expected.iter() {
        let got = params.get(name)?;
        if got.shape() != t.shape() {
            return Err(StssError::format(
                path,
                format!("{name}: shape {:?}, config expects {:?}", got.shape(), t.shape()),
            ));
        }
    }
    if params.len() != expected.len() {
        return Err(StssError::format(path, "parameter set does not match the config"));
    }
    Ok((cfg, params))
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(cfg: &NetConfig, params: &ParamStore, input: &Tensor, hist: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let mut b = Binder::new(params, false);
        let x = g.constant(input.clone());
        let h = g.constant(hist.clone());
        let y = forward(&mut g, &mut b, cfg, x, h).unwrap();
        g.value(y).clone()
    }

    fn inputs(h: usize, w: usize, seed: u64) -> (Tensor, Tensor) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Tensor::uniform(&[1, AUGMENTED_CHANNELS, h, w], 0.0, 1.0, &mut r);
        let plane = h * w;
        for c in [PRIMARY_MASK, PRIMARY_MASK + 1, PRIMARY_MASK + 2] {
            x.data_mut()[c * plane..(c + 1) * plane].fill(1.0);
        }
        (x, Tensor::uniform(&[1, HISTORY_CHANNELS, h, w], 0.0, 1.0, &mut r))
    }

    #[test]
    fn output_shape_doubles() {
        let cfg = NetConfig::desk();
        let params = init_params(&cfg).unwrap();
        let (x, hist) = inputs(64, 32, 1);
        let y = run(&cfg, &params, &x, &hist);
        assert_eq!(y.shape(), &[1, 3, 128, 64]);
    }

    #[test]
    fn zero_head_gives_baseline() {
        let cfg = NetConfig::desk();
        let params = init_params(&cfg).unwrap();
        let (x, hist) = inputs(16, 24, 2);
        let y = run(&cfg, &params, &x, &hist);
        assert_eq!(y, baseline_upsample(&x).unwrap());
    }

    #[test]
    fn deterministic() {
        let cfg = NetConfig::desk();
        let mut params = init_params(&cfg).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let w = params.get_mut("backbone.head.1.weight").unwrap();
        *w = Tensor::uniform(w.shape(), -0.1, 0.1, &mut r);
        let (x, hist) = inputs(16, 16, 3);
        let a = run(&cfg, &params, &x, &hist);
        let b = run(&cfg, &params, &x, &hist);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn desk_budget_and_partition() {
        let counts = count_params(&NetConfig::desk()).unwrap();
        assert!(counts.total < 150_000, "{counts:?}");
        assert_eq!(counts.backbone + counts.history + counts.erm, counts.total);
    }

    #[test]
    fn paper_budget() {
        let cfg = NetConfig::paper();
        let p = count_params(&cfg).unwrap();
        assert!((355_000..=480_000).contains(&p.total), "{p:?}");
        let f = count_flops(&cfg, 540, 960).unwrap();
        let ratio = f.erm as f64 / f.backbone as f64;
        assert!((0.08..=0.13).contains(&ratio), "{f:?}");
        assert!((26e9..=38e9).contains(&(f.total as f64)), "{f:?}");
    }

    #[test]
    fn flops_scale_with_pixels() {
        let cfg = NetConfig::desk();
        let a = count_flops(&cfg, 64, 128).unwrap();
        let b = count_flops(&cfg, 32, 64).unwrap();
        assert_eq!(a.backbone, 4 * b.backbone);
    }

    #[test]
    fn ablation_drops_erm_params() {
        let mut cfg = NetConfig::desk();
        cfg.use_erm = false;
        let store = init_params(&cfg).unwrap();
        assert_eq!(store.count_with_prefix("erm."), 0);
        let full = init_params(&NetConfig::desk()).unwrap();
        // Shared layers start from the same weights.
        assert_eq!(
            store.get("backbone.enc0.0.weight").unwrap(),
            full.get("backbone.enc0.0.weight").unwrap()
        );
    }

    #[test]
    fn rejects_layout_mismatch() {
        let cfg = NetConfig::desk();
        let params = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let mut b = Binder::new(&params, false);
        let x = g.constant(Tensor::zeros(&[1, 21, 16, 16]));
        let h = g.constant(Tensor::zeros(&[1, 12, 16, 16]));
        assert!(matches!(forward(&mut g, &mut b, &cfg, x, h), Err(StssError::Config(_))));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.stp");
        let cfg = NetConfig::desk();
        let params = init_params(&cfg).unwrap();
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (c2, p2) = load_checkpoint(&path).unwrap();
        assert_eq!(c2, cfg);
        assert_eq!(p2.to_bytes().unwrap(), params.to_bytes().unwrap());
    }
}
