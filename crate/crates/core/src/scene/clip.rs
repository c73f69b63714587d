//! Clips: per-frame LR/HR colour, G-buffer, motion fields and visibility,
//! held in memory or as a directory of frame files plus a text manifest.
//!
//! Manifest format (`manifest.txt`): `#`-prefixed header lines
//! (`# name …`, `# lr W H`, `# hr W H`, `# layout <file> <channels…>`), then
//! one record per frame:
//!
//! ```text
//! 0 SF lr_00000.stf hr_00000.stf gb_00000.stf mv_00000.stf mask_00000.stf
//! 1 EF - hr_00001.stf gb_00001.stf mv_00001.stf mask_00001.stf
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::warp::FrameRole;

use super::frame_io::{read_frame, write_frame};
use super::render::{render_frame, FrameData, GB_LAYOUT, MAX_REACH};
use super::spec::SceneSpec;

pub const MANIFEST: &str = "manifest.txt";
pub const SCENE_FILE: &str = "scene.toml";

/// Random access to the per-frame data of one clip.
pub trait FrameSource {
    fn name(&self) -> &str;
    fn frame_count(&self) -> usize;
    /// `(height, width)` of the LR stream.
    fn lr_dims(&self) -> (usize, usize);
    /// Rendered LR colour; an error on EF frames, which are never rendered.
    fn lr(&self, t: usize) -> Result<Image>;
    fn hr(&self, t: usize) -> Result<Image>;
    fn gbuffer(&self, t: usize) -> Result<Image>;
    /// `(dx_k, dy_k)` pairs for `k = 1..=5`.
    fn motion(&self, t: usize) -> Result<Image>;
    fn valid(&self, t: usize) -> Result<Image>;
}

fn out_of_range(t: usize, n: usize) -> StssError {
    StssError::Config(format!("frame {t} outside clip of {n} frames"))
}

fn not_rendered(t: usize) -> StssError {
    StssError::Config(format!("frame {t} is an extrapolation frame and has no LR render"))
}

/// A fully rendered clip held in memory.
#[derive(Clone, Debug)]
pub struct MemoryClip {
    pub name: String,
    pub frames: Vec<FrameData>,
    lr_dims: (usize, usize),
}

impl MemoryClip {
    pub fn render(scene: &SceneSpec) -> Self {
        let frames = (0..scene.output.frames).map(|t| render_frame(scene, t)).collect();
        MemoryClip {
            name: scene.name.clone(),
            frames,
            lr_dims: (scene.output.lr_height, scene.output.lr_width),
        }
    }

    fn get(&self, t: usize) -> Result<&FrameData> {
        self.frames.get(t).ok_or_else(|| out_of_range(t, self.frames.len()))
    }
}

impl FrameSource for MemoryClip {
    fn name(&self) -> &str {
        &self.name
    }
    fn frame_count(&self) -> usize {
        self.frames.len()
    }
    fn lr_dims(&self) -> (usize, usize) {
        self.lr_dims
    }
    fn lr(&self, t: usize) -> Result<Image> {
        self.get(t)?.lr.clone().ok_or_else(|| not_rendered(t))
    }
    fn hr(&self, t: usize) -> Result<Image> {
        Ok(self.get(t)?.hr.clone())
    }
    fn gbuffer(&self, t: usize) -> Result<Image> {
        Ok(self.get(t)?.gbuffer.clone())
    }
    fn motion(&self, t: usize) -> Result<Image> {
        Ok(self.get(t)?.motion.clone())
    }
    fn valid(&self, t: usize) -> Result<Image> {
        Ok(self.get(t)?.valid.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub role: FrameRole,
    pub lr: Option<String>,
    pub hr: String,
    pub gbuffer: String,
    pub motion: String,
    pub mask: String,
}

impl FrameRecord {
    fn for_index(index: usize) -> Self {
        let role = FrameRole::of(index);
        FrameRecord {
            index,
            role,
            lr: (role == FrameRole::Sf).then(|| format!("lr_{index:05}.stf")),
            hr: format!("hr_{index:05}.stf"),
            gbuffer: format!("gb_{index:05}.stf"),
            motion: format!("mv_{index:05}.stf"),
            mask: format!("mask_{index:05}.stf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub lr_width: usize,
    pub lr_height: usize,
    pub records: Vec<FrameRecord>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# stss clip manifest v1\n");
        s.push_str(&format!("# name {}\n", self.name));
        s.push_str(&format!("# lr {} {}\n", self.lr_width, self.lr_height));
        s.push_str(&format!("# hr {} {}\n", 2 * self.lr_width, 2 * self.lr_height));
        s.push_str("# layout lr r g b\n# layout hr r g b\n");
        s.push_str(&format!("# layout gb {}\n", GB_LAYOUT.join(" ")));
        let mv: Vec<String> = (1..=MAX_REACH).map(|k| format!("dx{k} dy{k}")).collect();
        s.push_str(&format!("# layout mv {}\n", mv.join(" ")));
        let mk: Vec<String> = (1..=MAX_REACH).map(|k| format!("valid{k}")).collect();
        s.push_str(&format!("# layout mask {}\n", mk.join(" ")));
        for r in &self.records {
            s.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                r.index,
                r.role,
                r.lr.as_deref().unwrap_or("-"),
                r.hr,
                r.gbuffer,
                r.motion,
                r.mask
            ));
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, reason: &str| StssError::format(path, format!("line {}: {reason}", line + 1));
        let mut name = None;
        let mut lr = None;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let mut parts = header.split_whitespace();
                match parts.next() {
                    Some("name") => name = Some(parts.collect::<Vec<_>>().join(" ")),
                    Some("lr") => {
                        let dims: Vec<usize> = parts
                            .map(|p| p.parse().map_err(|_| bad(i, "bad lr extent")))
                            .collect::<Result<_>>()?;
                        if dims.len() != 2 {
                            return Err(bad(i, "lr needs width and height"));
                        }
                        lr = Some((dims[0], dims[1]));
                    }
                    _ => {}
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(bad(i, "expected 7 fields"));
            }
            let index: usize = f[0].parse().map_err(|_| bad(i, "bad frame index"))?;
            let role: FrameRole = f[1].parse().map_err(|_| bad(i, "bad role"))?;
            if index != records.len() {
                return Err(bad(i, "frame indices must be consecutive from 0"));
            }
            if role != FrameRole::of(index) {
                return Err(bad(i, "role does not match frame parity"));
            }
            records.push(FrameRecord {
                index,
                role,
                lr: (f[2] != "-").then(|| f[2].to_string()),
                hr: f[3].into(),
                gbuffer: f[4].into(),
                motion: f[5].into(),
                mask: f[6].into(),
            });
        }
        let (lr_width, lr_height) = lr.ok_or_else(|| StssError::format(path, "missing '# lr' header"))?;
        Ok(Manifest {
            name: name.unwrap_or_default(),
            lr_width,
            lr_height,
            records,
        })
    }
}

fn write_frame_files(dir: &Path, rec: &FrameRecord, f: &FrameData) -> Result<()> {
    if let (Some(path), Some(lr)) = (&rec.lr, &f.lr) {
        write_frame(&dir.join(path), rec.role, lr)?;
    }
    write_frame(&dir.join(&rec.hr), rec.role, &f.hr)?;
    write_frame(&dir.join(&rec.gbuffer), rec.role, &f.gbuffer)?;
    write_frame(&dir.join(&rec.motion), rec.role, &f.motion)?;
    write_frame(&dir.join(&rec.mask), rec.role, &f.valid)
}

/// Renders every frame of `scene` into `dir` (created if needed), streaming
/// frames to disk one at a time.
pub fn render_clip(scene: &SceneSpec, dir: &Path) -> Result<Manifest> {
    scene.validate()?;
    fs::create_dir_all(dir).map_err(|e| StssError::io(dir, e))?;
    let scene_path = dir.join(SCENE_FILE);
    fs::write(&scene_path, scene.to_toml()?).map_err(|e| StssError::io(&scene_path, e))?;
    let mut records = Vec::with_capacity(scene.output.frames);
    for t in 0..scene.output.frames {
        let rec = FrameRecord::for_index(t);
        write_frame_files(dir, &rec, &render_frame(scene, t))?;
        log::debug!("{}: frame {t} written", scene.name);
        records.push(rec);
    }
    let manifest = Manifest {
        name: scene.name.clone(),
        lr_width: scene.output.lr_width,
        lr_height: scene.output.lr_height,
        records,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest.to_text()).map_err(|e| StssError::io(&path, e))?;
    Ok(manifest)
}

impl MemoryClip {
    pub fn save(&self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| StssError::io(dir, e))?;
        let mut records = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let rec = FrameRecord::for_index(f.index);
            write_frame_files(dir, &rec, f)?;
            records.push(rec);
        }
        let manifest = Manifest {
            name: self.name.clone(),
            lr_width: self.lr_dims.1,
            lr_height: self.lr_dims.0,
            records,
        };
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest.to_text()).map_err(|e| StssError::io(&path, e))?;
        Ok(manifest)
    }
}

/// A clip on disk; frames are read on demand.
#[derive(Clone, Debug)]
pub struct ClipDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl ClipDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| StssError::io(&path, e))?;
        Ok(ClipDir {
            dir: dir.to_path_buf(),
            manifest: Manifest::parse(&text, &path)?,
        })
    }

    fn record(&self, t: usize) -> Result<&FrameRecord> {
        self.manifest
            .records
            .get(t)
            .ok_or_else(|| out_of_range(t, self.manifest.records.len()))
    }

    fn read(&self, rel: &str, channels: usize, dims: (usize, usize)) -> Result<Image> {
        let path = self.dir.join(rel);
        let (_, img) = read_frame(&path)?;
        if img.channels() != channels || img.dims() != dims {
            return Err(StssError::format(
                &path,
                format!(
                    "expected {channels}x{}x{}, found {}x{}x{}",
                    dims.0,
                    dims.1,
                    img.channels(),
                    img.height(),
                    img.width()
                ),
            ));
        }
        Ok(img)
    }

    /// Loads everything into memory.
    pub fn load(&self) -> Result<MemoryClip> {
        let mut frames = Vec::with_capacity(self.frame_count());
        for t in 0..self.frame_count() {
            frames.push(FrameData {
                index: t,
                lr: if self.record(t)?.lr.is_some() {
                    Some(self.lr(t)?)
                } else {
                    None
                },
                hr: self.hr(t)?,
                gbuffer: self.gbuffer(t)?,
                motion: self.motion(t)?,
                valid: self.valid(t)?,
            });
        }
        Ok(MemoryClip {
            name: self.manifest.name.clone(),
            frames,
            lr_dims: self.lr_dims(),
        })
    }
}

impl FrameSource for ClipDir {
    fn name(&self) -> &str {
        &self.manifest.name
    }
    fn frame_count(&self) -> usize {
        self.manifest.records.len()
    }
    fn lr_dims(&self) -> (usize, usize) {
        (self.manifest.lr_height, self.manifest.lr_width)
    }
    fn lr(&self, t: usize) -> Result<Image> {
        let rel = self.record(t)?.lr.clone().ok_or_else(|| not_rendered(t))?;
        self.read(&rel, 3, self.lr_dims())
    }
    fn hr(&self, t: usize) -> Result<Image> {
        let (h, w) = self.lr_dims();
        self.read(&self.record(t)?.hr.clone(), 3, (2 * h, 2 * w))
    }
    fn gbuffer(&self, t: usize) -> Result<Image> {
        self.read(&self.record(t)?.gbuffer.clone(), GB_LAYOUT.len(), self.lr_dims())
    }
    fn motion(&self, t: usize) -> Result<Image> {
        self.read(&self.record(t)?.motion.clone(), 2 * MAX_REACH, self.lr_dims())
    }
    fn valid(&self, t: usize) -> Result<Image> {
        self.read(&self.record(t)?.mask.clone(), MAX_REACH, self.lr_dims())
    }
}
