//! Procedural scenes and a small analytic ray caster that renders paired
//! low/high resolution clips with exact G-buffers and motion vectors.

mod clip;
pub mod frame_io;
mod raycast;
mod render;
mod shading;
mod spec;

pub use clip::{render_clip, ClipDir, FrameRecord, FrameSource, Manifest, MemoryClip, MANIFEST, SCENE_FILE};
pub use raycast::{trace, world_point, Camera, Hit, Surface, SKY_DEPTH};
pub use render::{
    gbuffer_from_hits, in_frame, motion_fields, primary_hits, render_frame, render_hr, render_lr, shade, FrameData,
    BORDER_EPS, GB_BASE, GB_CHANNELS, GB_DEPTH, GB_LAYOUT, GB_METALLIC, GB_NORMAL, GB_ROUGHNESS, MAX_REACH,
};
pub use shading::{brdf_diffuse, brdf_specular, incident_lights, shade_point, Incident, SurfacePoint};
pub use spec::{
    AaBox, CameraSpec, DirectionalLight, Ground, Material, Motion, OutputSpec, Pattern, PointLight, SceneSpec, Sphere,
    Vec3,
};
