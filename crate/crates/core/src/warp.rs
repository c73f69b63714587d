//! Frame roles, history selection, backward warping and assembly of the
//! network input.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::scene::{in_frame, FrameSource, GB_CHANNELS, GB_DEPTH};

/// Supersampling frames are rendered (at low resolution); extrapolation
/// frames are not rendered at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameRole {
    Sf,
    Ef,
}

impl FrameRole {
    pub fn of(t: usize) -> Self {
        if t % 2 == 0 {
            FrameRole::Sf
        } else {
            FrameRole::Ef
        }
    }
}

impl fmt::Display for FrameRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameRole::Sf => "SF",
            FrameRole::Ef => "EF",
        })
    }
}

impl FromStr for FrameRole {
    type Err = StssError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SF" | "sf" => Ok(FrameRole::Sf),
            "EF" | "ef" => Ok(FrameRole::Ef),
            _ => Err(StssError::Config(format!("unknown frame role {s:?}"))),
        }
    }
}

/// Frames older than this cannot be assembled.
pub const MIN_HISTORY: usize = 5;

/// The three source frames of target `t`, most recent first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistoryPlan {
    pub target: usize,
    pub role: FrameRole,
    pub sources: [usize; 3],
}

impl HistoryPlan {
    /// Number of single-frame motion steps from the target back to source `i`.
    pub fn chain_len(&self, i: usize) -> usize {
        self.target - self.sources[i]
    }
}

pub fn select_history(t: usize, role: FrameRole) -> Result<HistoryPlan> {
    if t < MIN_HISTORY {
        return Err(StssError::InsufficientHistory { t });
    }
    if role != FrameRole::of(t) {
        return Err(StssError::Config(format!("frame {t} cannot be {role}")));
    }
    let sources = match role {
        FrameRole::Sf => [t, t - 2, t - 4],
        FrameRole::Ef => [t - 1, t - 3, t - 5],
    };
    Ok(HistoryPlan {
        target: t,
        role,
        sources,
    })
}

/// Per-pixel displacement (in pixels) from a target frame to its source
/// frame, plus a `{0, 1}` validity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    pub flow: Image,
    pub valid: Image,
}

impl MotionField {
    pub fn new(flow: Image, valid: Image) -> Result<Self> {
        if flow.channels() != 2 || valid.channels() != 1 || flow.dims() != valid.dims() {
            return Err(StssError::shape(
                "motion field",
                format!(
                    "flow {}ch {:?}, validity {}ch {:?}",
                    flow.channels(),
                    flow.dims(),
                    valid.channels(),
                    valid.dims()
                ),
            ));
        }
        Ok(MotionField { flow, valid })
    }

    pub fn zero(height: usize, width: usize) -> Self {
        MotionField {
            flow: Image::zeros(2, height, width),
            valid: Image::filled(1, height, width, 1.0),
        }
    }

    pub fn uniform(height: usize, width: usize, dx: f32, dy: f32) -> Self {
        let mut flow = Image::zeros(2, height, width);
        flow.plane_mut(0).fill(dx);
        flow.plane_mut(1).fill(dy);
        MotionField {
            flow,
            valid: Image::filled(1, height, width, 1.0),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.flow.dims()
    }

    /// Channels `(2(k−1), 2k−1)` and `k−1` of a clip frame's motion/valid files.
    pub fn from_clip_channels(motion: &Image, valid: &Image, k: usize) -> Result<Self> {
        Self::new(motion.select(2 * (k - 1), 2)?, valid.select(k - 1, 1)?)
    }
}

/// Bilinear taps `(y, x, weight)` around a continuous position already known
/// to be in frame; zero-weight taps are dropped.
fn taps(x: f64, y: f64, width: usize, height: usize) -> impl Iterator<Item = (usize, usize, f64)> {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    [
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x1, fx * (1.0 - fy)),
        (y1, x0, (1.0 - fx) * fy),
        (y1, x1, fx * fy),
    ]
    .into_iter()
    .filter(|t| t.2 > 0.0)
}

fn check_dims(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(StssError::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Backward warp: `out(p) = source(p + flow(p))` with bilinear sampling.
/// Returns the warped image and a mask that is 0 where the flow is flagged
/// invalid or samples outside the frame; masked pixels are 0.
pub fn warp(source: &Image, motion: &MotionField) -> Result<(Image, Image)> {
    check_dims("warp", source.dims(), motion.dims())?;
    let (h, w) = source.dims();
    let mut out = Image::zeros(source.channels(), h, w);
    let mut mask = Image::zeros(1, h, w);
    for y in 0..h {
        for x in 0..w {
            if motion.valid.get(0, y, x) == 0.0 {
                continue;
            }
            let sx = x as f64 + motion.flow.get(0, y, x) as f64;
            let sy = y as f64 + motion.flow.get(1, y, x) as f64;
            if !in_frame(sx, sy, w, h) {
                continue;
            }
            mask.set(0, y, x, 1.0);
            for c in 0..source.channels() {
                let v: f64 = taps(sx, sy, w, h)
                    .map(|(ty, tx, wt)| wt * source.get(c, ty, tx) as f64)
                    .sum();
                out.set(c, y, x, v as f32);
            }
        }
    }
    Ok((out, mask))
}

/// Chains single-step fields `t→t−1, t−1→t−2, …` into `t→t−k`.
///
/// Each later field is read bilinearly at the position reached so far; the
/// result is invalid wherever any step is invalid, leaves the frame, or
/// reads a bilinear tap that is itself invalid.
pub fn compose_motion(steps: &[MotionField]) -> Result<MotionField> {
    let first = steps
        .first()
        .ok_or_else(|| StssError::shape("compose_motion", "need at least one step"))?;
    let (h, w) = first.dims();
    for s in steps {
        check_dims("compose_motion", (h, w), s.dims())?;
    }
    if steps.len() == 1 {
        return Ok(first.clone());
    }
    let mut flow = Image::zeros(2, h, w);
    let mut valid = Image::zeros(1, h, w);
    for y in 0..h {
        'pixel: for x in 0..w {
            if first.valid.get(0, y, x) == 0.0 {
                continue;
            }
            let mut px = x as f64 + first.flow.get(0, y, x) as f64;
            let mut py = y as f64 + first.flow.get(1, y, x) as f64;
            for step in &steps[1..] {
                if !in_frame(px, py, w, h) {
                    continue 'pixel;
                }
                let (mut dx, mut dy) = (0.0, 0.0);
                for (ty, tx, wt) in taps(px, py, w, h) {
                    if step.valid.get(0, ty, tx) == 0.0 {
                        continue 'pixel;
                    }
                    dx += wt * step.flow.get(0, ty, tx) as f64;
                    dy += wt * step.flow.get(1, ty, tx) as f64;
                }
                px += dx;
                py += dy;
            }
            if !in_frame(px, py, w, h) {
                continue;
            }
            flow.set(0, y, x, (px - x as f64) as f32);
            flow.set(1, y, x, (py - y as f64) as f32);
            valid.set(0, y, x, 1.0);
        }
    }
    Ok(MotionField { flow, valid })
}

/// Channel layout of the assembled network input.
pub const NET_INPUT_CHANNELS: usize = 3 * 3 + GB_CHANNELS + 3;
pub const NET_INPUT_LAYOUT: &str =
    "warp0:rgb warp1:rgb warp2:rgb gb:base3,normal3,inv_depth,metallic,roughness mask0 mask1 mask2";
/// History branch input: the three warped frames and their masks.
pub const HISTORY_CHANNELS: usize = 12;

/// Unaugmented input for one target frame, sources most recent first.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub index: usize,
    pub role: FrameRole,
    pub warped: [Image; 3],
    /// Raw G-buffer of the target frame.
    pub gbuffer: Image,
    pub masks: [Image; 3],
}

/// Depth enters the network as `1 / (1 + depth)`, which keeps the sky
/// (depth 1000) near 0 and nearby geometry near 1.
pub fn normalize_gbuffer(gb: &Image) -> Image {
    let mut out = gb.clone();
    for v in out.plane_mut(GB_DEPTH) {
        *v = 1.0 / (1.0 + v.max(0.0));
    }
    out
}

impl NetInput {
    pub fn dims(&self) -> (usize, usize) {
        self.gbuffer.dims()
    }

    /// Mask of the most recent source; hole regions are where it is 0.
    pub fn primary_mask(&self) -> &Image {
        &self.masks[0]
    }

    /// The 21 network channels in [`NET_INPUT_LAYOUT`] order.
    pub fn channels(&self) -> Image {
        let gb = normalize_gbuffer(&self.gbuffer);
        Image::concat(&[
            &self.warped[0],
            &self.warped[1],
            &self.warped[2],
            &gb,
            &self.masks[0],
            &self.masks[1],
            &self.masks[2],
        ])
        .expect("net input planes share dims")
    }

    pub fn history(&self) -> Image {
        Image::concat(&[
            &self.warped[0],
            &self.warped[1],
            &self.warped[2],
            &self.masks[0],
            &self.masks[1],
            &self.masks[2],
        ])
        .expect("net input planes share dims")
    }
}

/// Single-step field `u → u−1` stored with frame `u`.
pub fn step_field(clip: &dyn FrameSource, u: usize) -> Result<MotionField> {
    MotionField::from_clip_channels(&clip.motion(u)?, &clip.valid(u)?, 1)
}

/// Composed field from `t` back to `t − k`.
pub fn chained_field(clip: &dyn FrameSource, t: usize, k: usize) -> Result<MotionField> {
    if k == 0 {
        let (h, w) = clip.lr_dims();
        return Ok(MotionField::zero(h, w));
    }
    if k > t {
        return Err(StssError::InsufficientHistory { t });
    }
    let steps = (0..k).map(|i| step_field(clip, t - i)).collect::<Result<Vec<_>>>()?;
    compose_motion(&steps)
}

pub fn build_net_input(clip: &dyn FrameSource, t: usize) -> Result<NetInput> {
    if t >= clip.frame_count() {
        return Err(StssError::Config(format!(
            "frame {t} outside clip of {} frames",
            clip.frame_count()
        )));
    }
    let plan = select_history(t, FrameRole::of(t))?;
    let mut warped = Vec::with_capacity(3);
    let mut masks = Vec::with_capacity(3);
    for i in 0..3 {
        let source = clip.lr(plan.sources[i])?;
        let (img, mask) = warp(&source, &chained_field(clip, t, plan.chain_len(i))?)?;
        warped.push(img);
        masks.push(mask);
    }
    let to3 = |v: Vec<Image>| -> [Image; 3] { v.try_into().expect("three sources") };
    Ok(NetInput {
        index: t,
        role: plan.role,
        warped: to3(warped),
        gbuffer: clip.gbuffer(t)?,
        masks: to3(masks),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Image::new(c, h, w, (0..c * h * w).map(|_| r.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn history_selection() {
        assert_eq!(select_history(10, FrameRole::Sf).unwrap().sources, [10, 8, 6]);
        assert_eq!(select_history(11, FrameRole::Ef).unwrap().sources, [10, 8, 6]);
        assert!(matches!(
            select_history(4, FrameRole::Sf),
            Err(StssError::InsufficientHistory { t: 4 })
        ));
        assert!(select_history(11, FrameRole::Sf).is_err());
    }

    #[test]
    fn role_parity_and_text() {
        assert_eq!(FrameRole::of(0), FrameRole::Sf);
        assert_eq!(FrameRole::of(7), FrameRole::Ef);
        assert_eq!("EF".parse::<FrameRole>().unwrap(), FrameRole::Ef);
        assert_eq!(FrameRole::Sf.to_string(), "SF");
    }

    #[test]
    fn zero_flow_is_identity() {
        let src = random_image(3, 6, 9, 1);
        let (out, mask) = warp(&src, &MotionField::zero(6, 9)).unwrap();
        assert_eq!(out, src);
        assert!(mask.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn integer_shift() {
        let (h, w) = (5, 10);
        let src = random_image(2, h, w, 2);
        let (out, mask) = warp(&src, &MotionField::uniform(h, w, 3.0, 0.0)).unwrap();
        for y in 0..h {
            for x in 0..w {
                if x + 3 >= w {
                    assert_eq!(mask.get(0, y, x), 0.0);
                    assert_eq!(out.get(0, y, x), 0.0);
                } else {
                    assert_eq!(mask.get(0, y, x), 1.0);
                    for c in 0..2 {
                        assert_eq!(out.get(c, y, x), src.get(c, y, x + 3));
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_flag_propagates() {
        let src = random_image(1, 4, 4, 3);
        let mut mf = MotionField::zero(4, 4);
        mf.valid.set(0, 2, 1, 0.0);
        let (out, mask) = warp(&src, &mf).unwrap();
        assert_eq!(mask.get(0, 2, 1), 0.0);
        assert_eq!(out.get(0, 2, 1), 0.0);
        assert_eq!(mask.data().iter().filter(|&&v| v == 0.0).count(), 1);
    }

    #[test]
    fn warp_dim_mismatch() {
        assert!(warp(&Image::zeros(1, 4, 4), &MotionField::zero(4, 5)).is_err());
    }

    #[test]
    fn composition_examples() {
        let one = MotionField::uniform(4, 8, 1.0, 0.0);
        assert_eq!(compose_motion(std::slice::from_ref(&one)).unwrap(), one);
        let two = MotionField::uniform(4, 8, 2.0, 0.0);
        let c = compose_motion(&[one, two]).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                if x + 3 < 8 {
                    assert_eq!(c.valid.get(0, y, x), 1.0);
                    assert_eq!(c.flow.get(0, y, x), 3.0);
                } else {
                    assert_eq!(c.valid.get(0, y, x), 0.0);
                }
            }
        }
        let z = compose_motion(&[MotionField::zero(3, 3), MotionField::zero(3, 3)]).unwrap();
        assert_eq!(z, MotionField::zero(3, 3));
        assert!(compose_motion(&[]).is_err());
    }

    #[test]
    fn composition_reads_invalid_taps() {
        let a = MotionField::uniform(3, 6, 0.5, 0.0);
        let mut b = MotionField::zero(3, 6);
        b.valid.set(0, 1, 3, 0.0);
        let c = compose_motion(&[a, b]).unwrap();
        // (1, 2) lands at x = 2.5 and touches the invalid tap at x = 3.
        assert_eq!(c.valid.get(0, 1, 2), 0.0);
        assert_eq!(c.valid.get(0, 1, 3), 0.0);
        assert_eq!(c.valid.get(0, 1, 1), 1.0);
    }

    proptest! {
        #[test]
        fn warp_is_linear(seed in 0u64..1000, a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let (h, w) = (5, 7);
            let x = random_image(2, h, w, seed);
            let y = random_image(2, h, w, seed + 1);
            let flow = random_image(2, h, w, seed + 2).map(|v| 4.0 * v - 2.0);
            let mf = MotionField::new(flow, Image::filled(1, h, w, 1.0)).unwrap();
            let mix = Image::new(2, h, w, x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
            let (wx, m) = warp(&x, &mf).unwrap();
            let (wy, _) = warp(&y, &mf).unwrap();
            let (wm, _) = warp(&mix, &mf).unwrap();
            for yy in 0..h {
                for xx in 0..w {
                    if m.get(0, yy, xx) == 0.0 { continue; }
                    for c in 0..2 {
                        let lhs = wm.get(c, yy, xx);
                        let rhs = a * wx.get(c, yy, xx) + b * wy.get(c, yy, xx);
                        prop_assert!((lhs - rhs).abs() < 1e-5);
                    }
                }
            }
        }

        #[test]
        fn composed_validity_is_monotone(seed in 0u64..1000) {
            let (h, w) = (6, 8);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let steps: Vec<MotionField> = (0..4).map(|_| {
                let flow = Image::new(2, h, w, (0..2 * h * w).map(|_| r.random_range(-1.5f32..1.5)).collect()).unwrap();
                let valid = Image::new(1, h, w, (0..h * w).map(|_| if r.random_bool(0.9) { 1.0 } else { 0.0 }).collect()).unwrap();
                MotionField::new(flow, valid).unwrap()
            }).collect();
            for k in 2..=steps.len() {
                let longer = compose_motion(&steps[..k]).unwrap();
                let shorter = compose_motion(&steps[..k - 1]).unwrap();
                for (l, s) in longer.valid.data().iter().zip(shorter.valid.data()) {
                    prop_assert!(*l <= *s);
                }
            }
        }
    }
}
