//! Random reshading masking: training-time rectangles punched into a copy
//! of the input, the copy concatenated with the untouched input, and a loss
//! weight map that emphasises every region the network has to reshade.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::warp::NET_INPUT_CHANNELS;

/// Input channels zeroed inside a rectangle: warped colour, G-buffer, masks.
const LR_AND_GB: std::ops::Range<usize> = 0..18;
pub const MASK_CHANNELS: std::ops::Range<usize> = 18..21;
/// Channel of the most recent source's validity mask.
pub const PRIMARY_MASK: usize = 18;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrmConfig {
    pub enabled: bool,
    pub rect_count_min: usize,
    pub rect_count_max: usize,
    /// Largest rectangle side as a fraction of the frame side.
    pub max_frac: f64,
    pub weight_hi: f32,
    pub weight_lo: f32,
}

impl Default for RrmConfig {
    fn default() -> Self {
        RrmConfig {
            enabled: true,
            rect_count_min: 1,
            rect_count_max: 4,
            max_frac: 0.25,
            weight_hi: 2.0,
            weight_lo: 1.0,
        }
    }
}

impl RrmConfig {
    pub fn disabled() -> Self {
        RrmConfig {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_frac > 0.0 && self.max_frac <= 0.25) {
            return Err(StssError::Config(format!(
                "rrm.max_frac {} outside (0, 0.25]",
                self.max_frac
            )));
        }
        if self.rect_count_min > self.rect_count_max {
            return Err(StssError::Config("rrm.rect_count_min exceeds rect_count_max".into()));
        }
        if !(self.weight_lo > 0.0 && self.weight_hi >= self.weight_lo) {
            return Err(StssError::Config("rrm weights need 0 < weight_lo <= weight_hi".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    fn contains(&self, y: usize, x: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Rectangles with sides in `[1, max_frac·side]` at uniform positions fully
/// inside a `height × width` frame.
pub fn draw_rects<R: Rng>(cfg: &RrmConfig, height: usize, width: usize, rng: &mut R) -> Vec<Rect> {
    let max_w = ((cfg.max_frac * width as f64).floor() as usize).max(1);
    let max_h = ((cfg.max_frac * height as f64).floor() as usize).max(1);
    let n = rng.random_range(cfg.rect_count_min..=cfg.rect_count_max);
    (0..n)
        .map(|_| {
            let rw = rng.random_range(1..=max_w);
            let rh = rng.random_range(1..=max_h);
            Rect {
                x: rng.random_range(0..=width - rw),
                y: rng.random_range(0..=height - rh),
                width: rw,
                height: rh,
            }
        })
        .collect()
}

fn check_input(input: &Image) -> Result<()> {
    if input.channels() != NET_INPUT_CHANNELS {
        return Err(StssError::shape(
            "rrm",
            format!("expected {NET_INPUT_CHANNELS} input channels, got {}", input.channels()),
        ));
    }
    Ok(())
}

/// Copy of `input` with colour, G-buffer and mask channels zeroed inside
/// every rectangle (clipped to the frame).
pub fn apply_rects(input: &Image, rects: &[Rect]) -> Result<Image> {
    check_input(input)?;
    let (h, w) = input.dims();
    let mut out = input.clone();
    for r in rects {
        for y in r.y..(r.y + r.height).min(h) {
            for x in r.x..(r.x + r.width).min(w) {
                for c in LR_AND_GB.chain(MASK_CHANNELS) {
                    out.set(c, y, x, 0.0);
                }
            }
        }
    }
    Ok(out)
}

/// `weight_hi` on the union of rectangles and holes of `primary_mask`,
/// `weight_lo` elsewhere.
pub fn loss_weights(primary_mask: &Image, rects: &[Rect], weight_hi: f32, weight_lo: f32) -> Image {
    let (h, w) = primary_mask.dims();
    let mut out = Image::filled(1, h, w, weight_lo);
    for y in 0..h {
        for x in 0..w {
            if primary_mask.get(0, y, x) == 0.0 || rects.iter().any(|r| r.contains(y, x)) {
                out.set(0, y, x, weight_hi);
            }
        }
    }
    out
}

/// Training augmentation. Returns the doubled input (masked copy first,
/// then the original) and the per-pixel loss weights at input resolution.
pub fn augment<R: Rng>(input: &Image, cfg: &RrmConfig, rng: &mut R) -> Result<(Image, Image)> {
    cfg.validate()?;
    check_input(input)?;
    let (h, w) = input.dims();
    if !cfg.enabled {
        return Ok((inference_input(input)?, Image::filled(1, h, w, cfg.weight_lo)));
    }
    let rects = draw_rects(cfg, h, w, rng);
    let masked = apply_rects(input, &rects)?;
    let primary = input.select(PRIMARY_MASK, 1)?;
    let weights = loss_weights(&primary, &rects, cfg.weight_hi, cfg.weight_lo);
    Ok((Image::concat(&[&masked, input])?, weights))
}

/// Evaluation-time input: the real holes are already zero in the input, so
/// the masked copy is the input itself.
pub fn inference_input(input: &Image) -> Result<Image> {
    check_input(input)?;
    Image::concat(&[input, input])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(h: usize, w: usize, seed: u64) -> Image {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(
            NET_INPUT_CHANNELS,
            h,
            w,
            (0..NET_INPUT_CHANNELS * h * w)
                .map(|_| r.random_range(0.1f32..1.0))
                .collect(),
        )
        .unwrap();
        for c in MASK_CHANNELS {
            img.plane_mut(c).fill(1.0);
        }
        img
    }

    #[test]
    fn disabled_duplicates_input() {
        let x = input(8, 16, 1);
        let cfg = RrmConfig::disabled();
        let (out, wts) = augment(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, Image::concat(&[&x, &x]).unwrap());
        assert!(wts.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_rect_zeroes_sixteen_pixels() {
        let x = input(32, 64, 2);
        let rect = Rect {
            x: 0,
            y: 0,
            width: 4,
            height: 4,
        };
        let masked = apply_rects(&x, &[rect]).unwrap();
        for c in 0..NET_INPUT_CHANNELS {
            let zeros = masked.plane(c).iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, 16, "channel {c}");
        }
        let cfg = RrmConfig::default();
        let (out, _) = augment(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(out.select(NET_INPUT_CHANNELS, NET_INPUT_CHANNELS).unwrap(), x);
    }

    #[test]
    fn rects_deterministic_and_bounded() {
        let cfg = RrmConfig::default();
        let a = draw_rects(&cfg, 32, 64, &mut ChaCha8Rng::seed_from_u64(9));
        let b = draw_rects(&cfg, 32, 64, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        for seed in 0..200 {
            for r in draw_rects(&cfg, 32, 64, &mut ChaCha8Rng::seed_from_u64(seed)) {
                assert!(r.width >= 1 && r.width <= 16 && r.height >= 1 && r.height <= 8);
                assert!(r.x + r.width <= 64 && r.y + r.height <= 32);
            }
        }
    }

    #[test]
    fn zeroed_count_is_union_area() {
        let x = input(32, 64, 3);
        let cfg = RrmConfig::default();
        for seed in 0..50 {
            let rects = draw_rects(&cfg, 32, 64, &mut ChaCha8Rng::seed_from_u64(seed));
            let masked = apply_rects(&x, &rects).unwrap();
            let area = (0..32)
                .flat_map(|y| (0..64).map(move |x| (y, x)))
                .filter(|&(y, x)| rects.iter().any(|r| r.contains(y, x)))
                .count();
            let zeros = masked.plane(PRIMARY_MASK).iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, area);
        }
    }

    #[test]
    fn weight_maps() {
        let none = loss_weights(&Image::filled(1, 4, 4, 1.0), &[], 2.0, 1.0);
        assert!(none.data().iter().all(|&v| v == 1.0));
        let all = loss_weights(&Image::zeros(1, 4, 4), &[], 2.0, 1.0);
        assert!(all.data().iter().all(|&v| v == 2.0));
        let half = Rect {
            x: 0,
            y: 0,
            width: 2,
            height: 4,
        };
        let w = loss_weights(&Image::filled(1, 4, 4, 1.0), &[half], 2.0, 1.0);
        assert_eq!(w.mean(), 1.5);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RrmConfig::default();
        cfg.max_frac = 0.3;
        assert!(cfg.validate().is_err());
        cfg.max_frac = 0.2;
        cfg.rect_count_min = 5;
        assert!(cfg.validate().is_err());
    }
}
