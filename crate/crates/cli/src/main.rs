use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use serde::Deserialize;

use stss::image::Image;
use stss::net::{self, NetConfig, ScalePreset};
use stss::scene::{render_clip, ClipDir, SceneSpec, MANIFEST};
use stss::train::bench::{bench, format_table};
use stss::train::data::{build_samples, load_samples, save_samples, Sample, SAMPLE_MANIFEST};
use stss::train::eval::{evaluate, Predictor};
use stss::train::trainer::{train, TrainConfig};

/// Preprocessed samples live in this subdirectory of a clip.
const SAMPLE_DIR: &str = "samples";

#[derive(Parser)]
#[command(
    name = "stss",
    version,
    about = "Space-time supersampling for rendered frame sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a clip from a scene description (or a random scene).
    Synth {
        #[arg(long, conflicts_with = "random")]
        scene: Option<PathBuf>,
        /// Seed of a randomly generated scene.
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 600)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and cache network inputs for every clip under a directory.
    Preprocess {
        #[arg(long)]
        clips: PathBuf,
    },
    /// Train a model from a TOML configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predicted frames of a clip as PNG files.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint (or the non-learned baseline) on clips.
    Eval {
        #[arg(long, required_unless_present = "baseline")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        baseline: bool,
        #[arg(long, required = true, num_args = 1..)]
        clip: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Time the LR, G-buffer, warping and network stages.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Frames on the high-rate timebase per resolution.
        #[arg(long, default_value_t = 200)]
        frames: usize,
        /// LR resolutions as WIDTHxHEIGHT.
        #[arg(long, num_args = 1.., default_values_t = ["64x32".to_string(), "128x64".to_string()])]
        res: Vec<String>,
    },
}

/// Training configuration file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    /// Clip directories, relative to the configuration file.
    clips: Vec<PathBuf>,
    #[serde(default = "default_preset")]
    preset: ScalePreset,
    use_erm: Option<bool>,
    /// Full network configuration; overrides `preset` and `use_erm`.
    net: Option<NetConfig>,
    #[serde(default)]
    train: TrainConfig,
}

fn default_preset() -> ScalePreset {
    ScalePreset::Desk
}

impl TrainFile {
    fn net_config(&self) -> Result<NetConfig> {
        if let Some(n) = &self.net {
            return Ok(n.clone());
        }
        let mut n = match self.preset {
            ScalePreset::Desk => NetConfig::desk(),
            ScalePreset::Paper => NetConfig::paper(),
            ScalePreset::Custom => bail!("preset `custom` needs a [net] table"),
        };
        if let Some(e) = self.use_erm {
            n.use_erm = e;
        }
        Ok(n)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            scene,
            random,
            width,
            height,
            frames,
            out,
        } => {
            let spec = match (scene, random) {
                (Some(p), _) => SceneSpec::load(&p)?,
                (None, Some(seed)) => {
                    let mut s = SceneSpec::random(seed, width, height, frames);
                    s.name = format!("random{seed}");
                    s
                }
                (None, None) => bail!("pass --scene or --random"),
            };
            let m = render_clip(&spec, &out)?;
            info!("{}: {} frames written to {}", m.name, m.records.len(), out.display());
        }
        Command::Preprocess { clips } => {
            let dirs = clip_dirs(&clips)?;
            for d in dirs {
                let samples = build_samples(&ClipDir::open(&d)?)?;
                save_samples(&d.join(SAMPLE_DIR), &samples)?;
                info!("{}: {} samples cached", d.display(), samples.len());
            }
        }
        Command::Train { config, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let file: TrainFile = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let net_cfg = file.net_config()?;
            let mut samples = Vec::new();
            for c in &file.clips {
                samples.extend(clip_samples(&base.join(c))?);
            }
            std::fs::create_dir_all(&out)?;
            let outcome = train(&samples, &file.train, &net_cfg, None, Some(&out))?;
            let mut curve = String::from("epoch,lr,loss\n");
            for e in &outcome.curve {
                curve.push_str(&format!("{},{:e},{}\n", e.epoch + 1, e.lr, e.mean_loss));
            }
            std::fs::write(out.join("loss.csv"), curve)?;
            info!("checkpoint written to {}", out.join("final.ckpt").display());
        }
        Command::Infer { ckpt, clip, out } => {
            let (cfg, params) = net::load_checkpoint(&ckpt)?;
            let predictor = Predictor::Model {
                cfg: &cfg,
                params: &params,
            };
            std::fs::create_dir_all(&out)?;
            for s in clip_samples(&clip)? {
                let img = predictor.predict(&s)?;
                write_png(&img, &out.join(format!("frame_{:05}.png", s.index)))?;
            }
        }
        Command::Eval {
            ckpt,
            baseline,
            clip,
            report,
        } => {
            let mut samples = Vec::new();
            for c in &clip {
                samples.extend(clip_samples(c)?);
            }
            let loaded = match (&ckpt, baseline) {
                (_, true) => None,
                (Some(p), false) => Some(net::load_checkpoint(p)?),
                (None, false) => bail!("pass --ckpt or --baseline"),
            };
            let predictor = match &loaded {
                Some((cfg, params)) => Predictor::Model { cfg, params },
                None => Predictor::Baseline,
            };
            let r = evaluate(&predictor, &samples)?;
            std::fs::write(&report, r.to_csv()).with_context(|| format!("writing {}", report.display()))?;
            print!("{}", r.to_table());
        }
        Command::Bench {
            ckpt,
            scene,
            frames,
            res,
        } => {
            let (cfg, params) = net::load_checkpoint(&ckpt)?;
            let spec = match scene {
                Some(p) => SceneSpec::load(&p)?,
                None => SceneSpec::random(1, 64, 32, frames),
            };
            let resolutions = res.iter().map(|r| parse_res(r)).collect::<Result<Vec<_>>>()?;
            print!("{}", format_table(&bench(&cfg, &params, &spec, &resolutions, frames)?));
        }
    }
    Ok(())
}

/// `dir` itself if it is a clip, otherwise its clip subdirectories.
fn clip_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).exists())
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no clips under {}", dir.display());
    }
    Ok(out)
}

/// Cached samples when present, otherwise built from the clip's frames.
fn clip_samples(dir: &Path) -> Result<Vec<Sample>> {
    let cache = dir.join(SAMPLE_DIR);
    if cache.join(SAMPLE_MANIFEST).exists() {
        return Ok(load_samples(&cache)?);
    }
    Ok(build_samples(&ClipDir::open(dir)?)?)
}

fn parse_res(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once('x')
        .with_context(|| format!("resolution `{s}` is not WIDTHxHEIGHT"))?;
    Ok((w.parse()?, h.parse()?))
}

/// 8-bit PNG with a 1/2.2 gamma encode.
fn write_png(img: &Image, path: &Path) -> Result<()> {
    let (h, w) = img.dims();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        for c in 0..3 {
            let v = img.get(c, y as usize, x as usize).clamp(0.0, 1.0);
            px.0[c] = (v.powf(1.0 / 2.2) * 255.0).round() as u8;
        }
    }
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}
