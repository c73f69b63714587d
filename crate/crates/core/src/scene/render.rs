//! Frame rendering: G-buffer pass, deferred shading, the two output streams
//! and analytic motion fields.

use crate::image::{downsample_box, Image};

use super::raycast::{trace, world_point, Camera, Hit, Surface};
use super::shading::{incident_lights, shade_point, SurfacePoint};
use super::spec::{SceneSpec, Vec3};

/// G-buffer channel layout.
pub const GB_CHANNELS: usize = 9;
pub const GB_BASE: usize = 0;
pub const GB_NORMAL: usize = 3;
pub const GB_DEPTH: usize = 6;
pub const GB_METALLIC: usize = 7;
pub const GB_ROUGHNESS: usize = 8;
pub const GB_LAYOUT: [&str; GB_CHANNELS] = [
    "base_r",
    "base_g",
    "base_b",
    "normal_x",
    "normal_y",
    "normal_z",
    "depth",
    "metallic",
    "roughness",
];

/// Longest motion-field reach, in frames.
pub const MAX_REACH: usize = 5;

/// Primary hits of every pixel centre of a `width × height` view at time `t`.
pub fn primary_hits(scene: &SceneSpec, t: f64, width: usize, height: usize) -> (Camera, Vec<Hit>) {
    let cam = Camera::at(scene, t, width, height);
    let mut hits = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let d = cam.ray(x as f64, y as f64);
            hits.push(trace(scene, &cam.position, &d, t));
        }
    }
    (cam, hits)
}

pub fn gbuffer_from_hits(hits: &[Hit], width: usize, height: usize) -> Image {
    let mut gb = Image::zeros(GB_CHANNELS, height, width);
    for (i, h) in hits.iter().enumerate() {
        let (y, x) = (i / width, i % width);
        gb.set(GB_DEPTH, y, x, h.distance as f32);
        if h.surface == Surface::Sky {
            continue;
        }
        for c in 0..3 {
            gb.set(GB_BASE + c, y, x, h.base_color[c] as f32);
            gb.set(GB_NORMAL + c, y, x, h.normal[c] as f32);
        }
        gb.set(GB_METALLIC, y, x, h.metallic as f32);
        gb.set(GB_ROUGHNESS, y, x, h.roughness as f32);
    }
    gb
}

fn shade_hit(scene: &SceneSpec, eye: &Vec3, h: &Hit) -> [f64; 3] {
    if h.surface == Surface::Sky {
        return scene.sky_color;
    }
    let p = SurfacePoint {
        position: h.position,
        normal: h.normal,
        base_color: h.base_color,
        metallic: h.metallic,
        roughness: h.roughness,
    };
    shade_point(&p, eye, &incident_lights(scene, &h.position))
}

fn color_from_hits(scene: &SceneSpec, cam: &Camera, hits: &[Hit], width: usize, height: usize) -> Image {
    let mut img = Image::zeros(3, height, width);
    for (i, h) in hits.iter().enumerate() {
        let rgb = shade_hit(scene, &cam.position, h);
        for c in 0..3 {
            img.set(c, i / width, i % width, rgb[c] as f32);
        }
    }
    img
}

/// Deferred shading of a G-buffer rendered from `scene` at time `t`.
/// Positions are reconstructed from the depth channel along the camera rays.
pub fn shade(gbuffer: &Image, scene: &SceneSpec, t: f64) -> Image {
    let (h, w) = gbuffer.dims();
    let cam = Camera::at(scene, t, w, h);
    let mut img = Image::zeros(3, h, w);
    for y in 0..h {
        for x in 0..w {
            let depth = gbuffer.get(GB_DEPTH, y, x) as f64;
            let normal = Vec3::new(
                gbuffer.get(GB_NORMAL, y, x) as f64,
                gbuffer.get(GB_NORMAL + 1, y, x) as f64,
                gbuffer.get(GB_NORMAL + 2, y, x) as f64,
            );
            let rgb = if normal == Vec3::zeros() {
                scene.sky_color
            } else {
                let position = cam.position + cam.ray(x as f64, y as f64) * depth;
                let p = SurfacePoint {
                    position,
                    normal: normal.normalize(),
                    base_color: [0, 1, 2].map(|c| gbuffer.get(GB_BASE + c, y, x) as f64),
                    metallic: gbuffer.get(GB_METALLIC, y, x) as f64,
                    roughness: gbuffer.get(GB_ROUGHNESS, y, x) as f64,
                };
                shade_point(&p, &cam.position, &incident_lights(scene, &position))
            };
            for c in 0..3 {
                img.set(c, y, x, rgb[c] as f32);
            }
        }
    }
    img
}

/// Low-resolution stream: one sample at each pixel centre, no antialiasing.
pub fn render_lr(scene: &SceneSpec, t: f64) -> Image {
    let (w, h) = (scene.output.lr_width, scene.output.lr_height);
    let (cam, hits) = primary_hits(scene, t, w, h);
    color_from_hits(scene, &cam, &hits, w, h)
}

/// High-resolution target (2× LR per axis): rendered at 4× LR and
/// box-filtered by 2, i.e. 2×2 samples per output pixel.
pub fn render_hr(scene: &SceneSpec, t: f64) -> Image {
    let (w, h) = (scene.output.lr_width * 4, scene.output.lr_height * 4);
    let (cam, hits) = primary_hits(scene, t, w, h);
    let fine = color_from_hits(scene, &cam, &hits, w, h);
    downsample_box(&fine, 2).expect("4x extents are even")
}

/// Motion from frame `t` back to `t − k` for `k = 1..=reach`.
///
/// Returns a `2·reach`-channel field `(dx_k, dy_k)` in LR pixels, where the
/// scene point seen at pixel `p` at time `t` projects to `p + (dx, dy)` at
/// time `t − k`, and a `reach`-channel validity map. A pixel is invalid for
/// `k` when its point leaves the frame or is hidden (by another object or by
/// its own far side) at `t − k`; invalid displacements are stored as 0.
pub fn motion_fields(scene: &SceneSpec, t: f64, hits: &[Hit], reach: usize) -> (Image, Image) {
    let (w, h) = (scene.output.lr_width, scene.output.lr_height);
    assert_eq!(hits.len(), w * h, "hits must cover the LR frame");
    let mut mv = Image::zeros(2 * reach, h, w);
    let mut valid = Image::zeros(reach, h, w);
    // The displacement is measured from the point's projection at `t` rather
    // than from the pixel centre; both agree to rounding, and a static scene
    // then yields exactly zero.
    let here = Camera::at(scene, t, w, h);
    let origins: Vec<Option<(f64, f64, bool)>> = hits.iter().map(|hit| reproject(scene, &here, hit, t)).collect();
    for k in 1..=reach {
        let tp = t - k as f64;
        let cam = Camera::at(scene, tp, w, h);
        for (i, hit) in hits.iter().enumerate() {
            let (y, x) = (i / w, i % w);
            let (Some((qx, qy, ok)), Some((px, py, _))) = (reproject(scene, &cam, hit, tp), origins[i]) else {
                continue;
            };
            if ok && in_frame(qx, qy, w, h) {
                mv.set(2 * (k - 1), y, x, (qx - px) as f32);
                mv.set(2 * (k - 1) + 1, y, x, (qy - py) as f32);
                valid.set(k - 1, y, x, 1.0);
            }
        }
    }
    (mv, valid)
}

/// Projects the point behind `hit` into the camera at time `tp` and checks it
/// is the first thing that camera sees along that line.
fn reproject(scene: &SceneSpec, cam: &Camera, hit: &Hit, tp: f64) -> Option<(f64, f64, bool)> {
    if hit.surface == Surface::Sky {
        let (qx, qy) = cam.project_direction(&hit.local)?;
        let back = trace(scene, &cam.position, &hit.local, tp);
        return Some((qx, qy, back.surface == Surface::Sky));
    }
    let p = world_point(scene, hit.surface, &hit.local, tp)?;
    let (qx, qy) = cam.project(&p)?;
    let to = p - cam.position;
    let dist = to.norm();
    let back = trace(scene, &cam.position, &(to / dist), tp);
    let visible = back.surface == hit.surface && (back.distance - dist).abs() <= 1e-6 * dist.max(1.0);
    Some((qx, qy, visible))
}

/// Tolerance (pixels) for samples that land on the frame border.
pub const BORDER_EPS: f64 = 1e-4;

/// Whether a continuous sample position can be read bilinearly.
pub fn in_frame(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= -BORDER_EPS
        && y >= -BORDER_EPS
        && x <= (width - 1) as f64 + BORDER_EPS
        && y <= (height - 1) as f64 + BORDER_EPS
}

/// Everything emitted for one frame of the high-frame-rate timebase.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameData {
    pub index: usize,
    /// Present on even (rendered) frames only.
    pub lr: Option<Image>,
    pub hr: Image,
    pub gbuffer: Image,
    pub motion: Image,
    pub valid: Image,
}

pub fn render_frame(scene: &SceneSpec, index: usize) -> FrameData {
    let t = index as f64;
    let (w, h) = (scene.output.lr_width, scene.output.lr_height);
    let (cam, hits) = primary_hits(scene, t, w, h);
    let lr = (index % 2 == 0).then(|| color_from_hits(scene, &cam, &hits, w, h));
    let (motion, valid) = motion_fields(scene, t, &hits, MAX_REACH);
    FrameData {
        index,
        lr,
        hr: render_hr(scene, t),
        gbuffer: gbuffer_from_hits(&hits, w, h),
        motion,
        valid,
    }
}
