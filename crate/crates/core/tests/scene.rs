use stss::image::downsample_box;
use stss::scene::{render_clip, render_frame, AaBox, CameraSpec, Material, Motion, OutputSpec, Pattern, SceneSpec};
use stss::train::metrics::canny;
use stss::warp::{warp, MotionField};

/// A camera at z = 10 facing a wall at z = 0 that fills the view.
fn wall_scene(width: usize, height: usize, camera_velocity: [f64; 3]) -> SceneSpec {
    SceneSpec {
        name: "wall".into(),
        output: OutputSpec {
            lr_width: width,
            lr_height: height,
            frames: 8,
        },
        camera: CameraSpec {
            position: [0.0, 0.0, 10.0],
            motion: Motion {
                velocity: camera_velocity,
                ..Motion::default()
            },
            yaw: 0.0,
            yaw_rate: 0.0,
            pitch: 0.0,
            fov_y_deg: 40.0,
        },
        ground: None,
        boxes: vec![AaBox {
            min: [-100.0, -100.0, -1.0],
            max: [100.0, 100.0, 0.0],
            material: Material {
                pattern: Pattern::Checker,
                pattern_scale: 0.7,
                ..Material::default()
            },
            motion: Motion::default(),
        }],
        ..SceneSpec::default()
    }
}

#[test]
fn camera_pan_gives_k_pixel_motion() {
    let (w, h) = (32, 16);
    // One LR pixel at depth 10 spans 2·tan(fov/2)·10/h scene units.
    let speed = 2.0 * (20.0f64.to_radians()).tan() * 10.0 / h as f64;
    let scene = wall_scene(w, h, [-speed, 0.0, 0.0]);
    let f = render_frame(&scene, 6);
    for k in 1..=5 {
        let mf = MotionField::from_clip_channels(&f.motion, &f.valid, k).unwrap();
        let mut checked = 0;
        for y in 0..h {
            for x in 0..w {
                if mf.valid.get(0, y, x) == 0.0 {
                    // Only the columns that left the frame may be invalid.
                    assert!(x < k, "({x},{y}) invalid for k={k}");
                    continue;
                }
                let (dx, dy) = (mf.flow.get(0, y, x), mf.flow.get(1, y, x));
                assert!((dx + k as f32).abs() <= 0.01, "dx {dx} at ({x},{y}) k={k}");
                assert!(dy.abs() <= 0.01);
                checked += 1;
            }
        }
        assert!(checked >= (w - k) * h);
    }
}

#[test]
fn warping_previous_frames_reproduces_shading() {
    let scene = SceneSpec::random(21, 64, 32, 12);
    let t = 10;
    let cur = render_frame(&scene, t);
    let lr_t = cur.lr.clone().unwrap();
    for k in [2usize, 4] {
        let src = render_frame(&scene, t - k).lr.unwrap();
        let mf = MotionField::from_clip_channels(&cur.motion, &cur.valid, k).unwrap();
        let (warped, mask) = warp(&src, &mf).unwrap();
        let (mut sum, mut n) = (0.0f64, 0usize);
        for y in 0..32 {
            for x in 0..64 {
                if mask.get(0, y, x) == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    sum += (warped.get(c, y, x) - lr_t.get(c, y, x)).abs() as f64;
                }
                n += 3;
            }
        }
        let mae = sum / n as f64;
        assert!(n > 3 * 64 * 32 / 2, "too few valid pixels for k={k}");
        assert!(mae < 2e-2, "k={k}: MAE {mae}");
    }
}

#[test]
fn low_resolution_edges_are_aliased() {
    let mut scene = wall_scene(32, 16, [0.0; 3]);
    scene.boxes.push(AaBox {
        min: [-0.83, -0.61, 0.5],
        max: [0.71, 0.77, 0.6],
        material: Material {
            base_color: [0.02, 0.02, 0.02],
            ..Material::default()
        },
        motion: Motion {
            velocity: [0.13, 0.05, 0.0],
            ..Motion::default()
        },
    });
    scene.boxes[0].material.pattern = Pattern::Solid;
    scene.boxes[0].material.base_color = [0.95, 0.95, 0.95];
    let f = render_frame(&scene, 4);
    let lr = f.lr.unwrap();
    let reference = downsample_box(&f.hr, 2).unwrap();
    let edges = canny(&reference, 100.0, 200.0);
    let (mut sum, mut n) = (0.0f64, 0usize);
    for y in 0..16 {
        for x in 0..32 {
            if edges.get(0, y, x) == 1.0 {
                for c in 0..3 {
                    sum += (lr.get(c, y, x) - reference.get(c, y, x)).abs() as f64;
                }
                n += 3;
            }
        }
    }
    assert!(n > 0, "no edges found");
    assert!(sum / n as f64 > 0.0);
}

#[test]
fn same_seed_gives_identical_clip_files() {
    let scene = SceneSpec::random(5, 16, 8, 7);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    render_clip(&scene, a.path()).unwrap();
    render_clip(&scene, b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 30);
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(&n)).unwrap(),
            std::fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn downsampling_preserves_mean() {
    let scene = SceneSpec::random(8, 32, 16, 4);
    let hr = render_frame(&scene, 2).hr;
    let d = downsample_box(&hr, 2).unwrap();
    assert!((hr.mean() - d.mean()).abs() < 1e-6);
}
