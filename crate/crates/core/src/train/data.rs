//! Training samples: one per target frame past the warm-up, holding the
//! 21-channel network input and the high-resolution target.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::scene::frame_io::{read_frame, write_frame};
use crate::scene::FrameSource;
use crate::warp::{build_net_input, FrameRole, HISTORY_CHANNELS, MIN_HISTORY, NET_INPUT_CHANNELS, NET_INPUT_LAYOUT};

/// Sample cache index file inside a preprocessed directory.
pub const SAMPLE_MANIFEST: &str = "samples.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub scene: String,
    pub index: usize,
    pub role: FrameRole,
    /// `NET_INPUT_CHANNELS` planes at low resolution.
    pub input: Image,
    /// RGB at twice the input resolution.
    pub target: Image,
}

impl Sample {
    pub fn new(scene: impl Into<String>, index: usize, role: FrameRole, input: Image, target: Image) -> Result<Self> {
        let (h, w) = input.dims();
        if input.channels() != NET_INPUT_CHANNELS {
            return Err(StssError::shape(
                "sample",
                format!("input has {} channels, expected {NET_INPUT_CHANNELS}", input.channels()),
            ));
        }
        if target.channels() != 3 || target.dims() != (2 * h, 2 * w) {
            return Err(StssError::shape(
                "sample",
                format!(
                    "target {}x{}x{} for input {h}x{w}",
                    target.channels(),
                    target.height(),
                    target.width()
                ),
            ));
        }
        Ok(Sample {
            scene: scene.into(),
            index,
            role,
            input,
            target,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.input.dims()
    }

    /// Warped frames and their masks, the history branch's input.
    pub fn history(&self) -> Image {
        history_of(&self.input)
    }

    /// Mask of the most recent warped source.
    pub fn primary_mask(&self) -> Image {
        self.input.select(18, 1).expect("input has 21 channels")
    }

    /// `(input, target)` restricted to an LR window and its HR image.
    pub fn crop(&self, y: usize, x: usize, height: usize, width: usize) -> Result<Sample> {
        Sample::new(
            self.scene.clone(),
            self.index,
            self.role,
            self.input.crop(y, x, height, width)?,
            self.target.crop(2 * y, 2 * x, 2 * height, 2 * width)?,
        )
    }
}

pub fn history_of(input: &Image) -> Image {
    let warped = input.select(0, 9).expect("input has 21 channels");
    let masks = input.select(18, 3).expect("input has 21 channels");
    let h = Image::concat(&[&warped, &masks]).expect("same dims");
    debug_assert_eq!(h.channels(), HISTORY_CHANNELS);
    h
}

/// Samples for every frame with enough history.
pub fn build_samples(clip: &dyn FrameSource) -> Result<Vec<Sample>> {
    (MIN_HISTORY..clip.frame_count())
        .map(|t| {
            let ni = build_net_input(clip, t)?;
            Sample::new(clip.name(), t, ni.role, ni.channels(), clip.hr(t)?)
        })
        .collect()
}

/// Writes samples as frame files plus an index carrying the channel layout.
pub fn save_samples(dir: &Path, samples: &[Sample]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| StssError::io(dir, e))?;
    let mut text = String::new();
    let _ = writeln!(text, "# layout {NET_INPUT_LAYOUT}");
    for s in samples {
        let input = format!("in_{}_{:05}.stf", s.scene, s.index);
        let target = format!("tgt_{}_{:05}.stf", s.scene, s.index);
        write_frame(&dir.join(&input), s.role, &s.input)?;
        write_frame(&dir.join(&target), s.role, &s.target)?;
        let _ = writeln!(text, "{} {} {} {input} {target}", s.scene, s.index, s.role);
    }
    let path = dir.join(SAMPLE_MANIFEST);
    std::fs::write(&path, text).map_err(|e| StssError::io(&path, e))
}

pub fn load_samples(dir: &Path) -> Result<Vec<Sample>> {
    let path = dir.join(SAMPLE_MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| StssError::io(&path, e))?;
    let mut lines = text.lines();
    match lines.next().and_then(|l| l.strip_prefix("# layout ")) {
        Some(layout) if layout == NET_INPUT_LAYOUT => {}
        Some(layout) => {
            return Err(StssError::format(
                &path,
                format!("cached layout `{layout}` differs from current"),
            ))
        }
        None => return Err(StssError::format(&path, "missing layout line")),
    }
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(StssError::format(&path, format!("bad record `{line}`")));
        }
        let index: usize = f[1]
            .parse()
            .map_err(|_| StssError::format(&path, format!("bad index `{}`", f[1])))?;
        let role: FrameRole = f[2].parse()?;
        let (r_in, input) = read_frame(&dir.join(f[3]))?;
        let (r_tgt, target) = read_frame(&dir.join(f[4]))?;
        if r_in != role || r_tgt != role || FrameRole::of(index) != role {
            return Err(StssError::format(&path, format!("role mismatch for frame {index}")));
        }
        out.push(Sample::new(f[0], index, role, input, target)?);
    }
    Ok(out)
}

/// A uniformly placed `size × size` LR window.
pub fn random_crop<R: Rng>(sample: &Sample, size: usize, rng: &mut R) -> Result<Sample> {
    let (h, w) = sample.dims();
    if size == 0 || size > h || size > w {
        return Err(StssError::Config(format!("crop {size} does not fit a {h}x{w} frame")));
    }
    let y = rng.random_range(0..=h - size);
    let x = rng.random_range(0..=w - size);
    sample.crop(y, x, size, size)
}
