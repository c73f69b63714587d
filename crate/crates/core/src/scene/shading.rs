//! Direct lighting: outgoing radiance is the sum over the discrete light set
//! of `L_i · f_r · max(cos θ_i, 0)`.

use std::f64::consts::PI;

use super::spec::{SceneSpec, Vec3};

/// BRDF inputs at one shading point (what the G-buffer stores).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub base_color: [f64; 3],
    pub metallic: f64,
    pub roughness: f64,
}

/// Lambertian lobe: `(1 − metallic) · base_color / π`.
pub fn brdf_diffuse(p: &SurfacePoint) -> [f64; 3] {
    p.base_color.map(|c| (1.0 - p.metallic) * c / PI)
}

/// GGX / Smith / Schlick specular lobe with `α = roughness²`.
pub fn brdf_specular(p: &SurfacePoint, to_light: &Vec3, to_eye: &Vec3) -> [f64; 3] {
    let n = p.normal;
    let n_l = n.dot(to_light);
    let n_v = n.dot(to_eye);
    if n_l <= 0.0 || n_v <= 0.0 {
        return [0.0; 3];
    }
    let h = (to_light + to_eye).normalize();
    let n_h = n.dot(&h).max(0.0);
    let v_h = to_eye.dot(&h).max(0.0);
    let alpha = (p.roughness * p.roughness).max(1e-3);
    let a2 = alpha * alpha;
    let denom = n_h * n_h * (a2 - 1.0) + 1.0;
    let d = a2 / (PI * denom * denom);
    let k = alpha / 2.0;
    let g = (n_l / (n_l * (1.0 - k) + k)) * (n_v / (n_v * (1.0 - k) + k));
    let fresnel = (1.0 - v_h).powi(5);
    let spec = d * g / (4.0 * n_l * n_v);
    [0, 1, 2].map(|i| {
        let f0 = 0.04 * (1.0 - p.metallic) + p.base_color[i] * p.metallic;
        spec * (f0 + (1.0 - f0) * fresnel)
    })
}

/// One incident light sample: unit direction toward the light and its radiance.
#[derive(Clone, Copy, Debug)]
pub struct Incident {
    pub direction: Vec3,
    pub radiance: [f64; 3],
}

pub fn incident_lights(scene: &SceneSpec, position: &Vec3) -> Vec<Incident> {
    let mut out = Vec::with_capacity(scene.directional_light.len() + scene.point_light.len());
    for l in &scene.directional_light {
        let d = Vec3::new(l.direction[0], l.direction[1], l.direction[2]).normalize();
        out.push(Incident {
            direction: d,
            radiance: l.intensity,
        });
    }
    for l in &scene.point_light {
        let to = Vec3::new(l.position[0], l.position[1], l.position[2]) - position;
        let d2 = to.norm_squared().max(1e-6);
        out.push(Incident {
            direction: to / d2.sqrt(),
            radiance: l.intensity.map(|i| i / d2),
        });
    }
    out
}

/// Outgoing radiance toward `eye` from a set of lights.
pub fn shade_point(p: &SurfacePoint, eye: &Vec3, lights: &[Incident]) -> [f64; 3] {
    let to_eye = (eye - p.position).normalize();
    let diffuse = brdf_diffuse(p);
    let mut out = [0.0; 3];
    for l in lights {
        let cos = p.normal.dot(&l.direction);
        if cos <= 0.0 {
            continue;
        }
        let spec = brdf_specular(p, &l.direction, &to_eye);
        for i in 0..3 {
            out[i] += l.radiance[i] * (diffuse[i] + spec[i]) * cos;
        }
    }
    out
}
