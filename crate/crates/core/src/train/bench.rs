//! Per-stage timing of the inference pipeline: LR rendering, G-buffer
//! generation, warping and the network, as medians over many frames.

use std::fmt;
use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::net::{self, NetConfig};
use crate::nn::Binder;
use crate::numerics::{Graph, ParamStore};
use crate::rrm::inference_input;
use crate::scene::{gbuffer_from_hits, motion_fields, primary_hits, render_lr, FrameSource, SceneSpec, MAX_REACH};
use crate::train::data::history_of;
use crate::warp::{build_net_input, FrameRole, MIN_HISTORY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Lr,
    Gb,
    Warp,
    Network,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Lr, Stage::Gb, Stage::Warp, Stage::Network];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Lr => "LR",
            Stage::Gb => "GB",
            Stage::Warp => "Warp",
            Stage::Network => "Network",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// LR input resolution.
    pub width: usize,
    pub height: usize,
    pub stage: Stage,
    pub median_ms: f64,
    pub frames: usize,
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The rendered stream without high-resolution targets.
struct Stream {
    name: String,
    dims: (usize, usize),
    lr: Vec<Option<Image>>,
    gbuffer: Vec<Image>,
    motion: Vec<Image>,
    valid: Vec<Image>,
}

impl FrameSource for Stream {
    fn name(&self) -> &str {
        &self.name
    }
    fn frame_count(&self) -> usize {
        self.gbuffer.len()
    }
    fn lr_dims(&self) -> (usize, usize) {
        self.dims
    }
    fn lr(&self, t: usize) -> Result<Image> {
        self.lr
            .get(t)
            .and_then(|f| f.clone())
            .ok_or_else(|| StssError::Config(format!("frame {t} has no rendered image")))
    }
    fn hr(&self, _t: usize) -> Result<Image> {
        Err(StssError::Config("benchmark stream has no targets".into()))
    }
    fn gbuffer(&self, t: usize) -> Result<Image> {
        Ok(self.gbuffer[t].clone())
    }
    fn motion(&self, t: usize) -> Result<Image> {
        Ok(self.motion[t].clone())
    }
    fn valid(&self, t: usize) -> Result<Image> {
        Ok(self.valid[t].clone())
    }
}

/// Times `frames` frames of `scene` rendered at each `(width, height)`.
/// Returns one row per resolution and stage.
pub fn bench(
    cfg: &NetConfig,
    params: &ParamStore,
    scene: &SceneSpec,
    resolutions: &[(usize, usize)],
    frames: usize,
) -> Result<Vec<BenchRow>> {
    if frames == 0 {
        return Err(StssError::Config("bench needs at least one frame".into()));
    }
    let mut rows = Vec::new();
    for &(w, h) in resolutions {
        let mut sc = scene.clone();
        sc.output.lr_width = w;
        sc.output.lr_height = h;
        sc.output.frames = MIN_HISTORY + frames;
        let mut times: [Vec<f64>; 4] = Default::default();
        let mut stream = Stream {
            name: sc.name.clone(),
            dims: (h, w),
            lr: Vec::new(),
            gbuffer: Vec::new(),
            motion: Vec::new(),
            valid: Vec::new(),
        };
        for t in 0..sc.output.frames {
            let timed = t >= MIN_HISTORY;
            let tf = t as f64;
            let lr = if FrameRole::of(t) == FrameRole::Sf {
                let start = Instant::now();
                let img = render_lr(&sc, tf);
                if timed {
                    times[0].push(ms(start));
                }
                Some(img)
            } else {
                None
            };
            let start = Instant::now();
            let (_, hits) = primary_hits(&sc, tf, w, h);
            let gb = gbuffer_from_hits(&hits, w, h);
            if timed {
                times[1].push(ms(start));
            }
            let (mv, valid) = motion_fields(&sc, tf, &hits, MAX_REACH);
            stream.lr.push(lr);
            stream.gbuffer.push(gb);
            stream.motion.push(mv);
            stream.valid.push(valid);
        }
        for t in MIN_HISTORY..stream.frame_count() {
            let start = Instant::now();
            let input = build_net_input(&stream, t)?.channels();
            times[2].push(ms(start));

            let start = Instant::now();
            let mut g = Graph::new();
            let mut b = Binder::new(params, false);
            let x = g.constant(inference_input(&input)?.to_tensor());
            let hist = g.constant(history_of(&input).to_tensor());
            let y = net::forward(&mut g, &mut b, cfg, x, hist)?;
            std::hint::black_box(g.value(y));
            times[3].push(ms(start));
        }
        for (stage, t) in Stage::ALL.into_iter().zip(times.iter_mut()) {
            rows.push(BenchRow {
                width: w,
                height: h,
                stage,
                frames: t.len(),
                median_ms: median(t),
            });
        }
    }
    Ok(rows)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>8} {:>7} {:>10}",
        "resolution", "stage", "frames", "median_ms"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10} {:>8} {:>7} {:>10.3}",
            format!("{}x{}", r.width, r.height),
            r.stage.to_string(),
            r.frames,
            r.median_ms
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn report_covers_all_stages() {
        let cfg = NetConfig::desk();
        let params = net::init_params(&cfg).unwrap();
        let scene = SceneSpec::random(1, 16, 8, 8);
        let rows = bench(&cfg, &params, &scene, &[(16, 8)], 4).unwrap();
        assert_eq!(rows.iter().map(|r| r.stage).collect::<Vec<_>>(), Stage::ALL.to_vec());
        // Rendered frames are every other frame.
        assert_eq!(rows[0].frames, 2);
        assert!(rows[1..].iter().all(|r| r.frames == 4));
        assert!(format_table(&rows).contains("Network"));
    }
}
