//! Evaluation: full-frame prediction, per-frame metrics and the per-scene,
//! per-role report.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::net::{self, NetConfig};
use crate::nn::Binder;
use crate::numerics::{Graph, ParamStore};
use crate::rrm::inference_input;
use crate::train::data::Sample;
use crate::train::metrics::{canny, psnr, region_metrics, ssim, RegionMetrics, CANNY_HIGH, CANNY_LOW};
use crate::warp::FrameRole;

pub const CSV_HEADER: &str = "scene,role,psnr,ssim,edge_psnr,edge_ssim,hole_psnr,hole_ssim";

/// Something that maps a sample's input to a high-resolution frame.
pub enum Predictor<'a> {
    Model {
        cfg: &'a NetConfig,
        params: &'a ParamStore,
    },
    /// Bilinear enlargement of the warped current frame, holes left black.
    Baseline,
}

impl Predictor<'_> {
    pub fn predict(&self, sample: &Sample) -> Result<Image> {
        let input = inference_input(&sample.input)?.to_tensor();
        let out = match self {
            Predictor::Baseline => net::baseline_upsample(&input)?,
            Predictor::Model { cfg, params } => {
                let mut g = Graph::new();
                let mut b = Binder::new(params, false);
                let x = g.constant(input);
                let h = g.constant(sample.history().to_tensor());
                let y = net::forward(&mut g, &mut b, cfg, x, h)?;
                g.value(y).clone()
            }
        };
        Image::from_tensor(&out, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub scene: String,
    pub index: usize,
    pub role: FrameRole,
    pub psnr: f64,
    pub ssim: f64,
    pub edge: RegionMetrics,
    pub hole: RegionMetrics,
    pub millis: f64,
}

/// Holes of the most recent warped source, lifted to the target resolution.
pub fn hole_region(sample: &Sample) -> Image {
    sample
        .primary_mask()
        .map(|m| if m == 0.0 { 1.0 } else { 0.0 })
        .upsample_nearest2()
}

/// Edges of the ground-truth frame.
pub fn edge_region(sample: &Sample) -> Image {
    canny(&sample.target, CANNY_LOW, CANNY_HIGH)
}

pub fn frame_metrics(sample: &Sample, pred: &Image, millis: f64) -> FrameMetrics {
    let t = &sample.target;
    FrameMetrics {
        scene: sample.scene.clone(),
        index: sample.index,
        role: sample.role,
        psnr: psnr(pred, t, 1.0),
        ssim: ssim(pred, t),
        edge: region_metrics(pred, t, &edge_region(sample)),
        hole: region_metrics(pred, t, &hole_region(sample)),
        millis,
    }
}

/// Mean metrics over one scene's frames of one role. Region columns average
/// only the frames whose region is non-empty and are `None` if there are
/// none.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleRow {
    pub scene: String,
    pub role: FrameRole,
    pub frames: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub edge_psnr: Option<f64>,
    pub edge_ssim: Option<f64>,
    pub hole_psnr: Option<f64>,
    pub hole_ssim: Option<f64>,
    pub millis_per_frame: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
    pub rows: Vec<RoleRow>,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let mut scenes: Vec<&str> = Vec::new();
        for f in &frames {
            if !scenes.contains(&f.scene.as_str()) {
                scenes.push(&f.scene);
            }
        }
        let mut rows = Vec::with_capacity(2 * scenes.len());
        for scene in scenes {
            for role in [FrameRole::Sf, FrameRole::Ef] {
                let sel: Vec<&FrameMetrics> = frames.iter().filter(|f| f.scene == scene && f.role == role).collect();
                rows.push(RoleRow {
                    scene: scene.to_string(),
                    role,
                    frames: sel.len(),
                    psnr: mean(sel.iter().map(|f| f.psnr)),
                    ssim: mean(sel.iter().map(|f| f.ssim)),
                    edge_psnr: mean(sel.iter().filter_map(|f| f.edge.psnr())),
                    edge_ssim: mean(sel.iter().filter_map(|f| f.edge.ssim())),
                    hole_psnr: mean(sel.iter().filter_map(|f| f.hole.psnr())),
                    hole_ssim: mean(sel.iter().filter_map(|f| f.hole.ssim())),
                    millis_per_frame: mean(sel.iter().map(|f| f.millis)),
                });
            }
        }
        EvalReport { frames, rows }
    }

    /// Mean PSNR over every frame.
    pub fn overall_psnr(&self) -> Option<f64> {
        mean(self.frames.iter().map(|f| f.psnr))
    }

    /// Mean region PSNR over frames of `role` with a non-empty region.
    pub fn hole_psnr(&self, role: FrameRole) -> Option<f64> {
        mean(
            self.frames
                .iter()
                .filter(|f| f.role == role)
                .filter_map(|f| f.hole.psnr()),
        )
    }

    pub fn edge_psnr(&self) -> Option<f64> {
        mean(self.frames.iter().filter_map(|f| f.edge.psnr()))
    }

    pub fn edge_ssim(&self) -> Option<f64> {
        mean(self.frames.iter().filter_map(|f| f.edge.ssim()))
    }

    pub fn hole_ssim(&self, role: FrameRole) -> Option<f64> {
        mean(
            self.frames
                .iter()
                .filter(|f| f.role == role)
                .filter_map(|f| f.hole.ssim()),
        )
    }

    /// Report rows as CSV; timings are left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "{CSV_HEADER}");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.scene,
                r.role,
                cell(r.psnr),
                cell(r.ssim),
                cell(r.edge_psnr),
                cell(r.edge_ssim),
                cell(r.hole_psnr),
                cell(r.hole_ssim)
            );
        }
        s
    }

    /// Human-readable table including timings.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<4} {:>6} {:>8} {:>7} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "scene", "role", "frames", "psnr", "ssim", "edge_psnr", "edge_ssim", "hole_psnr", "hole_ssim", "ms"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} {:<4} {:>6} {:>8} {:>7} {:>8} {:>8} {:>8} {:>8} {:>8}",
                r.scene,
                r.role.to_string(),
                r.frames,
                cell(r.psnr),
                cell(r.ssim),
                cell(r.edge_psnr),
                cell(r.edge_ssim),
                cell(r.hole_psnr),
                cell(r.hole_ssim),
                cell(r.millis_per_frame)
            );
        }
        s
    }
}

pub fn evaluate(predictor: &Predictor, samples: &[Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(StssError::Config("no evaluation samples".into()));
    }
    let mut frames = Vec::with_capacity(samples.len());
    for s in samples {
        let start = Instant::now();
        let pred = predictor.predict(s)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        frames.push(frame_metrics(s, &pred, ms));
    }
    Ok(EvalReport::from_frames(frames))
}
