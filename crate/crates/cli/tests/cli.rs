use std::path::Path;
use std::process::Command;

fn stss(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stss"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = stss(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_preprocess_train_eval_infer() {
    let dir = tempfile::tempdir().unwrap();
    let clips = dir.path().join("clips");
    for seed in ["1", "2"] {
        let out = clips.join(format!("c{seed}"));
        ok(&[
            "synth",
            "--random",
            seed,
            "--width",
            "16",
            "--height",
            "8",
            "--frames",
            "9",
            "--out",
            p(&out),
        ]);
    }
    ok(&["preprocess", "--clips", p(&clips)]);
    assert!(clips.join("c1/samples/samples.txt").exists());

    let cfg = dir.path().join("train.toml");
    std::fs::write(
        &cfg,
        "clips = [\"clips/c1\"]\npreset = \"desk\"\n[train]\nepochs = 1\ncrop = 16\ncrops_per_image = 1\n",
    )
    .unwrap();
    let ckpt_dir = dir.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&ckpt_dir)]);
    let ckpt = ckpt_dir.join("final.ckpt");
    assert!(ckpt.exists());
    assert!(ckpt_dir.join("loss.csv").exists());

    let report = dir.path().join("report.csv");
    let table = ok(&[
        "eval",
        "--ckpt",
        p(&ckpt),
        "--clip",
        p(&clips.join("c2")),
        "--report",
        p(&report),
    ]);
    assert!(table.contains("hole_psnr"));
    let csv = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scene,role,psnr,ssim,edge_psnr,edge_ssim,hole_psnr,hole_ssim");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",SF,") && lines[2].contains(",EF,"));

    let frames = dir.path().join("frames");
    ok(&[
        "infer",
        "--ckpt",
        p(&ckpt),
        "--clip",
        p(&clips.join("c2")),
        "--out",
        p(&frames),
    ]);
    let png = image::open(frames.join("frame_00005.png")).unwrap();
    assert_eq!((png.width(), png.height()), (32, 16));
}

#[test]
fn baseline_eval_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("clip");
    ok(&[
        "synth",
        "--random",
        "3",
        "--width",
        "16",
        "--height",
        "8",
        "--frames",
        "8",
        "--out",
        p(&clip),
    ]);
    let report = dir.path().join("r.csv");
    ok(&["eval", "--baseline", "--clip", p(&clip), "--report", p(&report)]);
    assert!(std::fs::read_to_string(&report).unwrap().lines().count() == 3);

    let cfg = dir.path().join("train.toml");
    std::fs::write(
        &cfg,
        "clips = [\"clip\"]\n[train]\nepochs = 1\ncrop = 16\ncrops_per_image = 1\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);
    let table = ok(&[
        "bench",
        "--ckpt",
        p(&run.join("final.ckpt")),
        "--frames",
        "4",
        "--res",
        "16x8",
    ]);
    for stage in ["LR", "GB", "Warp", "Network"] {
        assert!(table.contains(stage), "{table}");
    }
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = stss(&[
        "eval",
        "--ckpt",
        p(&dir.path().join("missing.ckpt")),
        "--clip",
        p(dir.path()),
        "--report",
        p(&dir.path().join("r.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!stss(&["synth", "--out", p(&dir.path().join("x"))]).status.success());
}
