//! Scene descriptions: objects, lights, camera path and stream settings.
//!
//! Scenes are stored as TOML so they stay hand-editable:
//!
//! ```toml
//! name = "demo"
//! seed = 3
//!
//! [output]
//! lr_width = 128
//! lr_height = 64
//! frames = 120
//!
//! [camera]
//! position = [0.0, 1.5, 8.0]
//! motion = { velocity = [0.02, 0.0, 0.0] }
//!
//! [[sphere]]
//! center = [0.0, 1.0, 0.0]
//! radius = 1.0
//! material = { base_color = [0.8, 0.2, 0.1], roughness = 0.4 }
//! ```

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StssError};

pub type Vec3 = Vector3<f64>;

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Rigid translation as a function of time (in frames):
/// `velocity·t + amplitude·sin(2π·frequency·t + phase)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Motion {
    pub velocity: [f64; 3],
    pub amplitude: [f64; 3],
    pub frequency: f64,
    pub phase: f64,
}

impl Motion {
    pub fn offset(&self, t: f64) -> Vec3 {
        let s = (std::f64::consts::TAU * self.frequency * t + self.phase).sin();
        v3(self.velocity) * t + v3(self.amplitude) * s
    }

    pub fn is_static(&self) -> bool {
        self.velocity == [0.0; 3] && (self.amplitude == [0.0; 3] || self.frequency == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    #[default]
    Solid,
    /// Alternating bands of `base_color` and `secondary_color`.
    Stripes,
    /// Soft-edged checkerboard of `base_color` and `secondary_color`.
    Checker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    pub base_color: [f64; 3],
    pub secondary_color: [f64; 3],
    pub pattern: Pattern,
    /// Pattern frequency in cycles per scene unit (checker, stripes on boxes)
    /// or per revolution (stripes on spheres).
    pub pattern_scale: f64,
    pub metallic: f64,
    pub roughness: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            base_color: [0.7, 0.7, 0.7],
            secondary_color: [0.2, 0.2, 0.2],
            pattern: Pattern::Solid,
            pattern_scale: 1.0,
            metallic: 0.0,
            roughness: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub motion: Motion,
    /// Rotation about the vertical axis, radians per frame.
    #[serde(default)]
    pub spin: f64,
}

/// Axis-aligned box; moves by translation only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AaBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub motion: Motion,
}

/// Infinite horizontal plane `y = height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ground {
    pub height: f64,
    pub material: Material,
}

impl Default for Ground {
    fn default() -> Self {
        Ground {
            height: 0.0,
            material: Material {
                base_color: [0.75, 0.72, 0.65],
                secondary_color: [0.25, 0.25, 0.3],
                pattern: Pattern::Checker,
                pattern_scale: 0.5,
                metallic: 0.0,
                roughness: 0.8,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionalLight {
    /// Direction from the surface toward the light.
    pub direction: [f64; 3],
    pub intensity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLight {
    pub position: [f64; 3],
    /// Radiant intensity; irradiance falls off with the squared distance.
    pub intensity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub position: [f64; 3],
    pub motion: Motion,
    /// Heading in radians; 0 looks down −z.
    pub yaw: f64,
    /// Radians per frame.
    pub yaw_rate: f64,
    pub pitch: f64,
    pub fov_y_deg: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            position: [0.0, 1.5, 8.0],
            motion: Motion::default(),
            yaw: 0.0,
            yaw_rate: 0.0,
            pitch: -0.12,
            fov_y_deg: 45.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Low-resolution (rendered) stream width; the high-resolution target is 2× in each axis.
    pub lr_width: usize,
    pub lr_height: usize,
    /// Frames on the high-frame-rate timebase. Even frames are rendered at
    /// low resolution, odd frames are not.
    pub frames: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            lr_width: 128,
            lr_height: 64,
            frames: 600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub seed: u64,
    pub output: OutputSpec,
    pub camera: CameraSpec,
    pub sky_color: [f64; 3],
    pub ground: Option<Ground>,
    pub sphere: Vec<Sphere>,
    #[serde(rename = "box")]
    pub boxes: Vec<AaBox>,
    pub directional_light: Vec<DirectionalLight>,
    pub point_light: Vec<PointLight>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            name: "scene".into(),
            seed: 0,
            output: OutputSpec::default(),
            camera: CameraSpec::default(),
            sky_color: [0.45, 0.6, 0.85],
            ground: Some(Ground::default()),
            sphere: Vec::new(),
            boxes: Vec::new(),
            directional_light: vec![DirectionalLight {
                direction: [0.4, 0.8, 0.45],
                intensity: [2.2, 2.1, 1.9],
            }],
            point_light: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| StssError::Config(format!("scene: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| StssError::Config(format!("scene: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| StssError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.output;
        if o.lr_width == 0 || o.lr_height == 0 || o.frames == 0 {
            return Err(StssError::Config(
                "output dimensions and frame count must be positive".into(),
            ));
        }
        if !(1.0..179.0).contains(&self.camera.fov_y_deg) {
            return Err(StssError::Config(format!("fov {} out of range", self.camera.fov_y_deg)));
        }
        for s in &self.sphere {
            if s.radius <= 0.0 {
                return Err(StssError::Config("sphere radius must be positive".into()));
            }
            check_material(&s.material)?;
        }
        for b in &self.boxes {
            if (0..3).any(|i| b.min[i] >= b.max[i]) {
                return Err(StssError::Config("box min must be below max on every axis".into()));
            }
            check_material(&b.material)?;
        }
        if let Some(g) = &self.ground {
            check_material(&g.material)?;
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.camera.motion.is_static()
            && self.camera.yaw_rate == 0.0
            && self.sphere.iter().all(|s| s.motion.is_static() && s.spin == 0.0)
            && self.boxes.iter().all(|b| b.motion.is_static())
    }

    /// A randomized scene: textured ground, a back wall, a few moving
    /// spheres and boxes, two lights and a slowly drifting camera.
    pub fn random(seed: u64, lr_width: usize, lr_height: usize, frames: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let color = |rng: &mut ChaCha8Rng| -> [f64; 3] {
            [
                rng.random_range(0.1..0.95),
                rng.random_range(0.1..0.95),
                rng.random_range(0.1..0.95),
            ]
        };
        let material = |rng: &mut ChaCha8Rng| {
            let pattern = match rng.random_range(0..3) {
                0 => Pattern::Solid,
                1 => Pattern::Stripes,
                _ => Pattern::Checker,
            };
            Material {
                base_color: color(rng),
                secondary_color: color(rng),
                pattern,
                pattern_scale: rng.random_range(0.8..3.0),
                metallic: if rng.random_bool(0.3) {
                    rng.random_range(0.5..1.0)
                } else {
                    0.0
                },
                roughness: rng.random_range(0.25..0.9),
            }
        };
        // Speeds are chosen so the fastest objects cover ~1-2 LR pixels per frame.
        let speed = 0.06 * 128.0 / lr_width.max(16) as f64;
        let motion = |rng: &mut ChaCha8Rng, scale: f64| Motion {
            velocity: [
                rng.random_range(-1.0..1.0) * speed * scale,
                0.0,
                rng.random_range(-0.5..0.5) * speed * scale,
            ],
            amplitude: [
                rng.random_range(0.0..1.2),
                rng.random_range(0.0..0.4),
                rng.random_range(0.0..0.6),
            ],
            frequency: rng.random_range(0.004..0.015),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        };

        let n_spheres = rng.random_range(2..=4);
        let mut sphere = Vec::new();
        for _ in 0..n_spheres {
            let radius = rng.random_range(0.45..1.1);
            sphere.push(Sphere {
                center: [
                    rng.random_range(-3.5..3.5),
                    radius + rng.random_range(0.0..0.6),
                    rng.random_range(-2.5..2.0),
                ],
                radius,
                material: material(&mut rng),
                motion: motion(&mut rng, 1.0),
                spin: rng.random_range(-0.03..0.03),
            });
        }
        let mut boxes = vec![AaBox {
            min: [-14.0, 0.0, -7.0],
            max: [14.0, 6.0, -6.0],
            material: Material {
                base_color: color(&mut rng),
                secondary_color: color(&mut rng),
                pattern: Pattern::Checker,
                pattern_scale: 0.7,
                metallic: 0.0,
                roughness: 0.9,
            },
            motion: Motion::default(),
        }];
        for _ in 0..rng.random_range(1..=2) {
            let half = [
                rng.random_range(0.3..0.9),
                rng.random_range(0.3..1.0),
                rng.random_range(0.3..0.9),
            ];
            let c = [rng.random_range(-3.5..3.5), half[1], rng.random_range(-3.0..1.5)];
            boxes.push(AaBox {
                min: [c[0] - half[0], c[1] - half[1], c[2] - half[2]],
                max: [c[0] + half[0], c[1] + half[1], c[2] + half[2]],
                material: material(&mut rng),
                motion: motion(&mut rng, 0.7),
            });
        }
        let camera = CameraSpec {
            position: [rng.random_range(-0.5..0.5), rng.random_range(1.2..2.0), 8.0],
            motion: Motion {
                velocity: [
                    rng.random_range(-0.3..0.3) * speed,
                    0.0,
                    rng.random_range(-0.2..0.0) * speed,
                ],
                amplitude: [rng.random_range(0.0..0.6), 0.0, 0.0],
                frequency: rng.random_range(0.002..0.006),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            },
            yaw: rng.random_range(-0.1..0.1),
            yaw_rate: rng.random_range(-0.0015..0.0015),
            pitch: rng.random_range(-0.2..-0.08),
            fov_y_deg: 45.0,
        };
        SceneSpec {
            name: format!("random-{seed}"),
            seed,
            output: OutputSpec {
                lr_width,
                lr_height,
                frames,
            },
            camera,
            sky_color: [0.45, 0.6, 0.85],
            ground: Some(Ground::default()),
            sphere,
            boxes,
            directional_light: vec![DirectionalLight {
                direction: [rng.random_range(-0.6..0.6), 0.8, rng.random_range(0.2..0.7)],
                intensity: [2.0, 1.95, 1.8],
            }],
            point_light: vec![PointLight {
                position: [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(2.5..4.0),
                    rng.random_range(0.0..3.0),
                ],
                intensity: [9.0, 8.0, 6.5],
            }],
        }
    }
}

fn check_material(m: &Material) -> Result<()> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !m.base_color.iter().chain(&m.secondary_color).all(|&v| unit(v)) || !unit(m.metallic) || !unit(m.roughness) {
        return Err(StssError::Config("material channels must lie in [0, 1]".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let spec = SceneSpec::random(5, 64, 32, 20);
        let text = spec.to_toml().unwrap();
        assert_eq!(SceneSpec::from_toml(&text).unwrap(), spec);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let spec = SceneSpec::from_toml(
            r#"
            name = "mini"
            [output]
            lr_width = 32
            lr_height = 16
            frames = 8
            [[sphere]]
            center = [0.0, 1.0, 0.0]
            radius = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(spec.output.lr_width, 32);
        assert_eq!(spec.sphere.len(), 1);
        assert!(spec.is_static());
    }

    #[test]
    fn rejects_bad_material() {
        let mut spec = SceneSpec::default();
        spec.sphere.push(Sphere {
            center: [0.0; 3],
            radius: 1.0,
            material: Material {
                roughness: 1.5,
                ..Material::default()
            },
            motion: Motion::default(),
            spin: 0.0,
        });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn trajectories_are_continuous() {
        let m = Motion {
            velocity: [0.1, 0.0, 0.0],
            amplitude: [0.5, 0.2, 0.0],
            frequency: 0.01,
            phase: 0.3,
        };
        let a = m.offset(10.0);
        let b = m.offset(10.0 + 1e-6);
        assert!((a - b).norm() < 1e-5);
    }
}
