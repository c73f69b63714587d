//! Analytic ray casting against spheres, boxes and the ground plane.

use nalgebra::{Rotation3, Unit};

use super::spec::{Material, Pattern, SceneSpec, Vec3};

/// Distance reported for rays that escape to the sky.
pub const SKY_DEPTH: f64 = 1000.0;

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Pinhole camera at one instant.
#[derive(Clone, Debug)]
pub struct Camera {
    pub position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half: f64,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn at(scene: &SceneSpec, t: f64, width: usize, height: usize) -> Self {
        let c = &scene.camera;
        let position = v3(c.position) + c.motion.offset(t);
        let yaw = c.yaw + c.yaw_rate * t;
        let forward = Vec3::new(yaw.sin() * c.pitch.cos(), c.pitch.sin(), -yaw.cos() * c.pitch.cos());
        let right = forward.cross(&Vec3::y()).normalize();
        let up = right.cross(&forward);
        Camera {
            position,
            forward,
            right,
            up,
            tan_half: (c.fov_y_deg.to_radians() * 0.5).tan(),
            width,
            height,
        }
    }

    fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// Unit ray direction through continuous pixel coordinates where pixel
    /// `(x, y)` has its centre at `(x, y)`.
    pub fn ray(&self, px: f64, py: f64) -> Vec3 {
        let nx = (2.0 * (px + 0.5) / self.width as f64 - 1.0) * self.tan_half * self.aspect();
        let ny = (1.0 - 2.0 * (py + 0.5) / self.height as f64) * self.tan_half;
        (self.forward + self.right * nx + self.up * ny).normalize()
    }

    /// Pixel coordinates of a direction from the camera, or `None` behind it.
    pub fn project_direction(&self, d: &Vec3) -> Option<(f64, f64)> {
        let z = d.dot(&self.forward);
        if z <= 1e-9 {
            return None;
        }
        let nx = d.dot(&self.right) / z / (self.tan_half * self.aspect());
        let ny = d.dot(&self.up) / z / self.tan_half;
        Some((
            (nx + 1.0) * 0.5 * self.width as f64 - 0.5,
            (1.0 - ny) * 0.5 * self.height as f64 - 0.5,
        ))
    }

    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        self.project_direction(&(p - self.position))
    }
}

/// What a primary ray hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Sky,
    Ground,
    Sphere(usize),
    Box(usize),
}

#[derive(Clone, Debug)]
pub struct Hit {
    pub surface: Surface,
    pub distance: f64,
    pub position: Vec3,
    pub normal: Vec3,
    /// Point in the object's own frame (undoes its motion at hit time).
    pub local: Vec3,
    pub base_color: [f64; 3],
    pub metallic: f64,
    pub roughness: f64,
}

fn sphere_rotation(spin: f64, t: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::y()), spin * t)
}

/// World-space position at time `t` of an object-local point.
pub fn world_point(scene: &SceneSpec, surface: Surface, local: &Vec3, t: f64) -> Option<Vec3> {
    match surface {
        Surface::Sky => None,
        Surface::Ground => Some(*local),
        Surface::Sphere(i) => {
            let s = &scene.sphere[i];
            Some(v3(s.center) + s.motion.offset(t) + sphere_rotation(s.spin, t) * local)
        }
        Surface::Box(i) => Some(local + scene.boxes[i].motion.offset(t)),
    }
}

fn smooth_wave(v: f64) -> f64 {
    // Soft square wave in [0, 1]; the transition band keeps textures from
    // aliasing so badly that warping tests measure sampling noise only.
    (0.5 + 1.5 * v.sin()).clamp(0.0, 1.0)
}

fn pattern_weight(m: &Material, coords: [f64; 3]) -> f64 {
    let k = std::f64::consts::TAU * m.pattern_scale;
    match m.pattern {
        Pattern::Solid => 0.0,
        Pattern::Stripes => smooth_wave(k * coords[0]),
        Pattern::Checker => {
            let a = (k * coords[0]).sin() * (k * coords[2]).sin();
            (0.5 + 1.5 * a).clamp(0.0, 1.0)
        }
    }
}

fn shade_material(m: &Material, coords: [f64; 3]) -> [f64; 3] {
    let w = pattern_weight(m, coords);
    [0, 1, 2].map(|i| m.base_color[i] * (1.0 - w) + m.secondary_color[i] * w)
}

fn intersect_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > 1e-6 {
        return Some(t0);
    }
    let t1 = -b + sq;
    (t1 > 1e-6).then_some(t1)
}

fn intersect_box(origin: &Vec3, dir: &Vec3, min: &Vec3, max: &Vec3) -> Option<(f64, Vec3)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis_near = 0;
    for a in 0..3 {
        if dir[a].abs() < 1e-12 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut t0, mut t1) = ((min[a] - origin[a]) * inv, (max[a] - origin[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            axis_near = a;
        }
        t_far = t_far.min(t1);
    }
    if t_near > t_far || t_near <= 1e-6 {
        return None;
    }
    let mut n = Vec3::zeros();
    n[axis_near] = -dir[axis_near].signum();
    Some((t_near, n))
}

/// Nearest intersection along a unit ray at time `t`.
pub fn trace(scene: &SceneSpec, origin: &Vec3, dir: &Vec3, t: f64) -> Hit {
    let mut best: Option<(f64, Surface, Vec3)> = None;
    let mut consider = |d: f64, s: Surface, n: Vec3| {
        if best.as_ref().is_none_or(|b| d < b.0) {
            best = Some((d, s, n));
        }
    };
    if let Some(g) = &scene.ground {
        if dir.y.abs() > 1e-12 {
            let d = (g.height - origin.y) / dir.y;
            if d > 1e-6 {
                let n = if origin.y >= g.height { Vec3::y() } else { -Vec3::y() };
                consider(d, Surface::Ground, n);
            }
        }
    }
    for (i, s) in scene.sphere.iter().enumerate() {
        let c = v3(s.center) + s.motion.offset(t);
        if let Some(d) = intersect_sphere(origin, dir, &c, s.radius) {
            let n = (origin + dir * d - c).normalize();
            consider(d, Surface::Sphere(i), n);
        }
    }
    for (i, b) in scene.boxes.iter().enumerate() {
        let off = b.motion.offset(t);
        if let Some((d, n)) = intersect_box(origin, dir, &(v3(b.min) + off), &(v3(b.max) + off)) {
            consider(d, Surface::Box(i), n);
        }
    }
    let Some((distance, surface, normal)) = best else {
        return Hit {
            surface: Surface::Sky,
            distance: SKY_DEPTH,
            position: origin + dir * SKY_DEPTH,
            normal: Vec3::zeros(),
            local: *dir,
            base_color: [0.0; 3],
            metallic: 0.0,
            roughness: 0.0,
        };
    };
    let position = origin + dir * distance;
    let (local, material, coords) = match surface {
        Surface::Ground => {
            let m = &scene.ground.as_ref().expect("ground hit").material;
            (position, m, [position.x, 0.0, position.z])
        }
        Surface::Sphere(i) => {
            let s = &scene.sphere[i];
            let c = v3(s.center) + s.motion.offset(t);
            let local = sphere_rotation(s.spin, t).inverse() * (position - c);
            let u = local.z.atan2(local.x) / std::f64::consts::TAU;
            let v = (local.y / s.radius).clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
            // Stripes run around the sphere; checker uses both angles.
            let coords = [u * 4.0, 0.0, v * 2.0];
            (local, &s.material, coords)
        }
        Surface::Box(i) => {
            let b = &scene.boxes[i];
            let local = position - b.motion.offset(t);
            let rel = local - v3(b.min);
            (local, &b.material, [rel.x + rel.y, 0.0, rel.z + rel.y])
        }
        Surface::Sky => unreachable!(),
    };
    Hit {
        surface,
        distance,
        position,
        normal,
        local,
        base_color: shade_material(material, coords),
        metallic: material.metallic,
        roughness: material.roughness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_inverts_ray() {
        let scene = SceneSpec::random(1, 64, 32, 10);
        let cam = Camera::at(&scene, 3.0, 64, 32);
        for &(x, y) in &[(0.0, 0.0), (10.3, 20.7), (63.0, 31.0)] {
            let d = cam.ray(x, y);
            let (px, py) = cam.project(&(cam.position + d * 5.0)).unwrap();
            assert!((px - x).abs() < 1e-9 && (py - y).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_hit_has_unit_normal() {
        let mut scene = SceneSpec::default();
        scene.ground = None;
        scene.sphere.push(super::super::spec::Sphere {
            center: [0.0, 0.0, -5.0],
            radius: 1.0,
            material: Material::default(),
            motion: Default::default(),
            spin: 0.0,
        });
        let hit = trace(&scene, &Vec3::zeros(), &Vec3::new(0.0, 0.0, -1.0), 0.0);
        assert_eq!(hit.surface, Surface::Sphere(0));
        assert!((hit.distance - 4.0).abs() < 1e-12);
        assert!((hit.normal.norm() - 1.0).abs() < 1e-12);
        let miss = trace(&scene, &Vec3::zeros(), &Vec3::new(0.0, 1.0, 0.0), 0.0);
        assert_eq!(miss.surface, Surface::Sky);
        assert_eq!(miss.distance, SKY_DEPTH);
    }

    #[test]
    fn box_face_normal() {
        let mut scene = SceneSpec::default();
        scene.ground = None;
        scene.boxes.push(super::super::spec::AaBox {
            min: [-1.0, -1.0, -6.0],
            max: [1.0, 1.0, -4.0],
            material: Material::default(),
            motion: Default::default(),
        });
        let hit = trace(&scene, &Vec3::zeros(), &Vec3::new(0.0, 0.0, -1.0), 0.0);
        assert_eq!(hit.surface, Surface::Box(0));
        assert!((hit.distance - 4.0).abs() < 1e-12);
        assert_eq!(hit.normal, Vec3::new(0.0, 0.0, 1.0));
    }
}
