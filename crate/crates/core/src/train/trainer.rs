//! The training loop: shuffled SF and EF crops in one stream, RRM
//! augmentation per crop, Adam with step decay.

use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::net::{self, NetConfig};
use crate::nn::Binder;
use crate::numerics::{Adam, Graph, ParamStore, Tensor};
use crate::rrm::{self, RrmConfig};
use crate::scene::frame_io::write_frame;
use crate::train::data::{random_crop, Sample};
use crate::train::loss::{total_loss, upsample_weights, PerceptualProxy};

/// Whether the decay step counts epochs or optimizer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayUnit {
    Epoch,
    Iteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub lr_step: usize,
    pub gamma: f32,
    pub decay: DecayUnit,
    /// Side of the square high-resolution training patch.
    pub crop: usize,
    pub crops_per_image: usize,
    pub batch_size: usize,
    pub w_p: f32,
    pub proxy_seed: u64,
    pub rrm: RrmConfig,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 1e-4,
            lr_step: 50,
            gamma: 0.9,
            decay: DecayUnit::Epoch,
            crop: 64,
            crops_per_image: 4,
            batch_size: 4,
            w_p: 0.01,
            proxy_seed: 0x5eed,
            rrm: RrmConfig::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 100,
            crop: 256,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self, net: &NetConfig) -> Result<()> {
        let bad = |m: String| Err(StssError::Config(m));
        if !(self.lr > 0.0) || !(self.gamma > 0.0) || self.lr_step == 0 {
            return bad("lr, gamma and lr_step must be positive".into());
        }
        if self.epochs == 0 || self.crops_per_image == 0 || self.batch_size == 0 {
            return bad("epochs, crops_per_image and batch_size must be positive".into());
        }
        if !(self.w_p >= 0.0) {
            return bad(format!("w_p {} must be non-negative", self.w_p));
        }
        let m = 2 * net.size_multiple();
        if self.crop == 0 || self.crop % m != 0 {
            return bad(format!("crop {} must be a positive multiple of {m}", self.crop));
        }
        self.rrm.validate()
    }

    /// Learning rate for a 0-based epoch and global iteration.
    pub fn lr_at(&self, epoch: usize, iteration: usize) -> f32 {
        let k = match self.decay {
            DecayUnit::Epoch => epoch,
            DecayUnit::Iteration => iteration,
        } / self.lr_step;
        self.lr * self.gamma.powi(k as i32)
    }
}

/// One optimizer step's worth of tensors.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `(N, 42, h, w)` augmented input.
    pub input: Tensor,
    /// `(N, 12, h, w)`.
    pub history: Tensor,
    /// `(N, 3, 2h, 2w)`.
    pub target: Tensor,
    /// `(N, 1, 2h, 2w)` loss weights.
    pub weights: Tensor,
}

impl Batch {
    /// Applies RRM to each crop and stacks the results.
    pub fn assemble(crops: &[Sample], rrm_cfg: &RrmConfig, rng: &mut ChaCha8Rng) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(crops.len());
        let mut weights = Vec::with_capacity(crops.len());
        for c in crops {
            let (aug, w) = rrm::augment(&c.input, rrm_cfg, rng)?;
            inputs.push(aug.to_tensor());
            weights.push(upsample_weights(&w.to_tensor())?);
        }
        Ok(Batch {
            input: Tensor::stack_batch(&inputs)?,
            history: Tensor::stack_batch(&crops.iter().map(|c| c.history().to_tensor()).collect::<Vec<_>>())?,
            target: Tensor::stack_batch(&crops.iter().map(|c| c.target.to_tensor()).collect::<Vec<_>>())?,
            weights: Tensor::stack_batch(&weights)?,
        })
    }

    /// Writes every tensor of the batch as frame files for inspection.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| StssError::io(dir, e))?;
        for (name, t) in [
            ("input", &self.input),
            ("history", &self.history),
            ("target", &self.target),
            ("weights", &self.weights),
        ] {
            let n = t.dims4()?.0;
            for i in 0..n {
                let img = Image::from_tensor(t, i)?;
                write_frame(&dir.join(format!("{name}_{i}.stf")), crate::warp::FrameRole::Sf, &img)?;
            }
        }
        Ok(())
    }
}

/// Parameters, optimizer state and the frozen loss network.
pub struct Trainer {
    pub net: NetConfig,
    pub params: ParamStore,
    adam: Adam,
    proxy: PerceptualProxy,
    w_p: f32,
}

impl Trainer {
    pub fn new(net: NetConfig, params: ParamStore, w_p: f32, proxy_seed: u64) -> Result<Self> {
        net.validate()?;
        Ok(Trainer {
            net,
            params,
            adam: Adam::default(),
            proxy: PerceptualProxy::new(proxy_seed)?,
            w_p,
        })
    }

    pub fn loss(&self, batch: &Batch) -> Result<f32> {
        let mut g = Graph::new();
        let mut b = Binder::new(&self.params, false);
        let l = self.build(&mut g, &mut b, batch)?;
        Ok(g.value(l).data()[0])
    }

    fn build(&self, g: &mut Graph, b: &mut Binder, batch: &Batch) -> Result<crate::numerics::Var> {
        let x = g.constant(batch.input.clone());
        let h = g.constant(batch.history.clone());
        let y = g.constant(batch.target.clone());
        let pred = net::forward(g, b, &self.net, x, h)?;
        total_loss(g, pred, y, &batch.weights, &self.proxy, self.w_p)
    }

    /// Loss before the update; returns `Diverged` (epoch/step left 0) on a
    /// non-finite loss or gradient, leaving the parameters untouched.
    pub fn step(&mut self, batch: &Batch, lr: f32) -> Result<f32> {
        let mut g = Graph::new();
        let mut b = Binder::new(&self.params, true);
        let l = self.build(&mut g, &mut b, batch)?;
        let loss = g.value(l).data()[0];
        let diverged = |reason: String| StssError::Diverged {
            epoch: 0,
            step: 0,
            reason,
        };
        if !loss.is_finite() {
            return Err(diverged(format!("loss is {loss}")));
        }
        g.backward(l)?;
        let grads = b.grads(&g);
        match self.adam.step(&mut self.params, &grads, lr) {
            Err(StssError::NonFinite(what)) => Err(diverged(format!("non-finite {what}"))),
            other => other.map(|_| loss),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f32,
    pub mean_loss: f32,
    pub steps: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub curve: Vec<EpochStats>,
}

/// Trains from `params` (fresh initialisation when `None`). With `out_dir`
/// set, checkpoints land there as `epoch_XXXX.ckpt` and `final.ckpt`, and a
/// diverging batch is dumped to `out_dir/diverged`.
pub fn train(
    samples: &[Sample],
    cfg: &TrainConfig,
    net_cfg: &NetConfig,
    params: Option<ParamStore>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate(net_cfg)?;
    if samples.is_empty() {
        return Err(StssError::Config("no training samples".into()));
    }
    let params = match params {
        Some(p) => p,
        None => net::init_params(net_cfg)?,
    };
    let lr_crop = cfg.crop / 2;
    let mut trainer = Trainer::new(net_cfg.clone(), params, cfg.w_p, cfg.proxy_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let mut crops = Vec::with_capacity(order.len() * cfg.crops_per_image);
        for &i in &order {
            for _ in 0..cfg.crops_per_image {
                crops.push(random_crop(&samples[i], lr_crop, &mut rng)?);
            }
        }
        let mut total = 0.0f64;
        let mut steps = 0usize;
        let mut epoch_lr = cfg.lr_at(epoch, iteration);
        for (s, chunk) in crops.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::assemble(chunk, &cfg.rrm, &mut rng)?;
            let lr = cfg.lr_at(epoch, iteration);
            if s == 0 {
                epoch_lr = lr;
            }
            match trainer.step(&batch, lr) {
                Ok(l) => total += l as f64,
                Err(StssError::Diverged { reason, .. }) => {
                    if let Some(dir) = out_dir {
                        batch.dump(&dir.join("diverged"))?;
                    }
                    return Err(StssError::Diverged { epoch, step: s, reason });
                }
                Err(e) => return Err(e),
            }
            iteration += 1;
            steps += 1;
        }
        let mean_loss = (total / steps as f64) as f32;
        info!("epoch {:>4}  lr {:.3e}  loss {:.5}", epoch + 1, epoch_lr, mean_loss);
        curve.push(EpochStats {
            epoch,
            lr: epoch_lr,
            mean_loss,
            steps,
        });
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                net::save_checkpoint(&checkpoint_path(dir, epoch + 1), net_cfg, &trainer.params)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        net::save_checkpoint(&dir.join("final.ckpt"), net_cfg, &trainer.params)?;
    }
    Ok(TrainOutcome {
        params: trainer.params,
        curve,
    })
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_by_epoch() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0, 0), 1e-4);
        assert_eq!(c.lr_at(49, 999), 1e-4);
        assert!((c.lr_at(50, 0) - 0.9 * c.lr_at(49, 0)).abs() < 1e-10);
        assert!((c.lr_at(100, 0) - 0.81e-4).abs() < 1e-10);
    }

    #[test]
    fn step_decay_by_iteration() {
        let c = TrainConfig {
            decay: DecayUnit::Iteration,
            ..TrainConfig::default()
        };
        assert_eq!(c.lr_at(0, 49), 1e-4);
        assert!((c.lr_at(0, 50) - 0.9e-4).abs() < 1e-10);
    }

    #[test]
    fn validation() {
        let net = NetConfig::desk();
        assert!(TrainConfig::default().validate(&net).is_ok());
        assert!(TrainConfig::paper().validate(&net).is_ok());
        for bad in [
            TrainConfig {
                lr: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                crop: 60,
                ..TrainConfig::default()
            },
            TrainConfig {
                w_p: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                gamma: 0.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate(&net).is_err());
        }
    }

    #[test]
    fn config_toml_roundtrip() {
        let c = TrainConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), c);
        assert!(toml::from_str::<TrainConfig>("decay = \"iteration\"").is_ok());
    }
}
