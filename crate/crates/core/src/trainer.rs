//! Adversarial training of one translation network on normal footage.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{Checkpoint, EpochStats};
use crate::dataset::{DatasetSplit, VideoSequence};
use crate::error::{config_err, Error, Result};
use crate::gan::{
    cgan_loss, generator_adv_loss, l1_loss, l1_loss_grad, Direction, Discriminator, DiscriminatorTopology, Generator,
    GeneratorTopology, NoiseSource,
};
use crate::nn::Parameterized;
use crate::optflow::{encode_flow, FlowRange, FlowStore};
use crate::optim::{Optimizer, OptimizerKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    /// SGD with momentum.
    Sgd,
    /// Adam with `beta1 = 0.5`.
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub direction: Direction,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerChoice,
    pub momentum: f64,
    pub learning_rate: f64,
    pub resolution: usize,
    pub seed: u64,
    pub lambda_l1: f64,
    pub generator_channels: usize,
    pub discriminator_channels: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            direction: Direction::FrameToFlow,
            epochs: 10,
            batch_size: 1,
            optimizer: OptimizerChoice::Sgd,
            momentum: 0.5,
            learning_rate: 2e-4,
            resolution: 256,
            seed: 0,
            lambda_l1: 100.0,
            generator_channels: 64,
            discriminator_channels: 64,
            dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(config_err!("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(config_err!("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.learning_rate >= 0.0) || !(self.lambda_l1 >= 0.0) {
            return Err(config_err!("learning rate and L1 weight must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err!("dropout must lie in [0, 1)"));
        }
        self.generator_topology()?;
        self.discriminator_topology()?;
        Ok(())
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        match self.optimizer {
            OptimizerChoice::Sgd => OptimizerKind::sgd(self.momentum),
            OptimizerChoice::Adam => OptimizerKind::Adam {
                beta1: self.momentum,
                beta2: 0.999,
                eps: 1e-8,
            },
        }
    }

    pub fn generator_topology(&self) -> Result<GeneratorTopology> {
        let mut t = GeneratorTopology::for_resolution(self.resolution, self.generator_channels)?;
        t.dropout_rate = self.dropout;
        Ok(t)
    }

    pub fn discriminator_topology(&self) -> Result<DiscriminatorTopology> {
        DiscriminatorTopology::for_resolution(self.resolution, self.discriminator_channels)
    }

    /// Short digest of the serialised configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

/// Mixes a base seed with stream identifiers (splitmix64 finaliser).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Conditioning image `x` and target `y` for one network direction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair<T> {
    pub x: Tensor<T>,
    pub y: Tensor<T>,
}

/// Lazily materialised training pairs `(F_t, O_t)` or `(O_t, F_t)`.
pub struct TrainingSet<'a> {
    videos: Vec<&'a VideoSequence>,
    index: Vec<(usize, usize)>,
    pub direction: Direction,
    pub resolution: usize,
    pub range: FlowRange,
    flows: &'a FlowStore,
}

/// Lower / upper percentiles and minimum span of the frozen flow mapping.
pub const FLOW_RANGE_PERCENTILES: (f64, f64) = (1.0, 99.0);
pub const FLOW_RANGE_MIN_SPAN: f64 = 0.5;

/// Fits the flow range on every consecutive training pair.
pub fn fit_flow_range(split: &DatasetSplit, flows: &FlowStore) -> Result<FlowRange> {
    let videos: Vec<&VideoSequence> = split.train.iter().collect();
    flows.prefetch(&videos)?;
    let mut fields = Vec::new();
    for v in &videos {
        for t in 0..v.frames.len().saturating_sub(1) {
            fields.push(flows.get(v, t)?);
        }
    }
    let refs: Vec<_> = fields.iter().map(|f| f.as_ref()).collect();
    FlowRange::from_percentiles(
        &refs,
        FLOW_RANGE_PERCENTILES.0,
        FLOW_RANGE_PERCENTILES.1,
        FLOW_RANGE_MIN_SPAN,
    )
}

/// Flow image of pair `t` at `resolution²`, displacements in resized pixels.
pub fn flow_input<T: Scalar>(
    flows: &FlowStore,
    video: &VideoSequence,
    t: usize,
    resolution: usize,
    range: &FlowRange,
) -> Result<Tensor<T>> {
    let f = flows.get(video, t)?.resized(resolution, resolution).cast::<T>();
    Ok(encode_flow(&f, range)?.data)
}

pub fn build_training_set<'a>(
    split: &'a DatasetSplit,
    direction: Direction,
    resolution: usize,
    flows: &'a FlowStore,
    range: Option<FlowRange>,
) -> Result<TrainingSet<'a>> {
    if split.train.is_empty() {
        return Err(config_err!("training split is empty"));
    }
    for v in &split.train {
        if v.has_abnormal_frames() {
            return Err(config_err!(
                "training video {} contains abnormal frames; training uses normal videos only",
                v.id
            ));
        }
        if v.frames.len() < 2 {
            return Err(Error::DegenerateVideo {
                video: v.id.clone(),
                len: v.frames.len(),
            });
        }
    }
    let range = match range {
        Some(r) => r,
        None => fit_flow_range(split, flows)?,
    };
    let videos: Vec<&VideoSequence> = split.train.iter().collect();
    let index = videos
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| (0..v.frames.len() - 1).map(move |t| (vi, t)))
        .collect();
    Ok(TrainingSet {
        videos,
        index,
        direction,
        resolution,
        range,
        flows,
    })
}

impl<'a> TrainingSet<'a> {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// `(video id, t)` of pair `k`.
    pub fn source(&self, k: usize) -> (&str, usize) {
        let (vi, t) = self.index[k];
        (&self.videos[vi].id, t)
    }

    pub fn pair<T: Scalar>(&self, k: usize) -> Result<TrainingPair<T>> {
        let (vi, t) = self.index[k];
        let video = self.videos[vi];
        let frame = video.frames[t].model_input::<T>(self.resolution);
        let flow = flow_input(self.flows, video, t, self.resolution, &self.range)?;
        Ok(match self.direction {
            Direction::FrameToFlow => TrainingPair { x: frame, y: flow },
            Direction::FlowToFrame => TrainingPair { x: flow, y: frame },
        })
    }

    /// Pair visiting order for `epoch`, a pure function of `(seed, epoch)`.
    pub fn epoch_order(&self, seed: u64, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5348_5546, epoch as u64]));
        order.shuffle(&mut rng);
        order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss_d: f64,
    pub loss_g_adv: f64,
    pub loss_l1: f64,
}

/// One discriminator update followed by one generator update on `batch`.
///
/// Gradients are averaged over the batch. The generator's adversarial term is
/// evaluated against the freshly updated discriminator.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Scalar>(
    gen: &mut Generator<T>,
    disc: &mut Discriminator<T>,
    gen_opt: &mut Optimizer<T>,
    disc_opt: &mut Optimizer<T>,
    batch: &[TrainingPair<T>],
    lambda_l1: f64,
    noise: NoiseSource,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(config_err!("empty batch"));
    }
    let bn = T::lit(batch.len() as f64);
    let caches = batch
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = NoiseSource {
                seed: derive_seed(noise.seed, &[i as u64]),
                ..noise
            };
            gen.forward_train(&p.x, n)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut d_grads = disc.zero_grads();
    let mut loss_d = T::zero();
    for (p, gc) in batch.iter().zip(&caches) {
        let real = disc.forward_train(&p.x, &p.y)?;
        let fake = disc.forward_train(&p.x, gc.output())?;
        let l = cgan_loss(real.probabilities(), fake.probabilities())?;
        disc.backward(&real, &l.grad_d_real, &mut d_grads);
        disc.backward(&fake, &l.grad_d_fake, &mut d_grads);
        loss_d += l.loss_d;
    }
    d_grads.scale(T::one() / bn);
    if !loss_d.is_finite() || !d_grads.all_finite() {
        return Err(Error::Numeric("non-finite discriminator loss".into()));
    }
    disc_opt.step(disc, &d_grads);

    let lambda = T::lit(lambda_l1);
    let mut g_grads = gen.zero_grads();
    let mut loss_adv = T::zero();
    let mut loss_l1 = T::zero();
    for (p, gc) in batch.iter().zip(&caches) {
        let fake = disc.forward_train(&p.x, gc.output())?;
        let (adv, adv_grad) = generator_adv_loss(fake.probabilities())?;
        let mut scratch = disc.zero_grads();
        let g_adv = disc.backward(&fake, &adv_grad, &mut scratch);
        let l1 = l1_loss(&p.y, gc.output())?;
        let g_l1 = l1_loss_grad(&p.y, gc.output())?;
        let total = g_adv.zip_map(&g_l1, |a, b| a + lambda * b)?;
        gen.backward(gc, &total, &mut g_grads);
        loss_adv += adv;
        loss_l1 += l1;
    }
    g_grads.scale(T::one() / bn);
    if !loss_adv.is_finite() || !loss_l1.is_finite() || !g_grads.all_finite() {
        return Err(Error::Numeric("non-finite generator loss".into()));
    }
    gen_opt.step(gen, &g_grads);

    Ok(StepMetrics {
        loss_d: (loss_d / bn).to_f64_lossy(),
        loss_g_adv: (loss_adv / bn).to_f64_lossy(),
        loss_l1: (loss_l1 / bn).to_f64_lossy(),
    })
}

/// Where and how [`train_network`] persists progress.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Epoch-end checkpoints are written here as `epoch_NNN.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Per-step losses are appended here at the end of every epoch.
    pub metrics_csv: Option<PathBuf>,
    /// Frozen flow mapping; fitted on the training split when absent.
    pub flow_range: Option<FlowRange>,
    /// Stop after this many completed epochs (used to resume later).
    pub stop_after: Option<usize>,
}

/// Fresh networks and optimisers for `cfg`.
pub fn initial_checkpoint<T: Scalar>(cfg: &TrainConfig, flow_range: Option<FlowRange>) -> Result<Checkpoint<T>> {
    cfg.validate()?;
    let gen = Generator::new(
        cfg.generator_topology()?,
        cfg.direction,
        derive_seed(cfg.seed, &[0x0047_454e]),
    );
    let disc = Discriminator::new(cfg.discriminator_topology()?, derive_seed(cfg.seed, &[0x0044_4953]));
    let gen_opt = Optimizer::new(cfg.optimizer_kind(), cfg.learning_rate, &gen);
    let disc_opt = Optimizer::new(cfg.optimizer_kind(), cfg.learning_rate, &disc);
    Ok(Checkpoint {
        config: cfg.clone(),
        generator: gen,
        discriminator: disc,
        gen_opt,
        disc_opt,
        epoch: 0,
        history: Vec::new(),
        flow_range,
    })
}

fn append_metrics(path: &Path, epoch: usize, rows: &[StepMetrics]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fresh = !path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str("epoch,step,loss_D,loss_G_adv,loss_L1\n");
    }
    for (step, m) in rows.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            epoch + 1,
            step,
            m.loss_d,
            m.loss_g_adv,
            m.loss_l1
        ));
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Path of the checkpoint written after `epoch` (1-based) completes.
pub fn epoch_checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}.ckpt"))
}

/// Trains (or resumes) one network for `cfg.epochs` epochs.
pub fn train_network<T: Scalar>(
    split: &DatasetSplit,
    cfg: &TrainConfig,
    flows: &FlowStore,
    opts: &TrainOptions,
    resume: Option<Checkpoint<T>>,
) -> Result<Checkpoint<T>> {
    cfg.validate()?;
    let mut ckpt = match resume {
        Some(c) => {
            if c.config.direction != cfg.direction || c.config.resolution != cfg.resolution {
                return Err(config_err!(
                    "cannot resume a {} checkpoint at resolution {} as {} at {}",
                    c.config.direction,
                    c.config.resolution,
                    cfg.direction,
                    cfg.resolution
                ));
            }
            c
        }
        None => initial_checkpoint(cfg, opts.flow_range)?,
    };
    let range = opts.flow_range.or(ckpt.flow_range);
    let set = build_training_set(split, cfg.direction, cfg.resolution, flows, range)?;
    ckpt.flow_range = Some(set.range);
    ckpt.config.epochs = cfg.epochs;

    let last = opts.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    while ckpt.epoch < last {
        let epoch = ckpt.epoch;
        let order = set.epoch_order(cfg.seed, epoch);
        let mut rows = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = chunk.iter().map(|&k| set.pair::<T>(k)).collect::<Result<Vec<_>>>()?;
            let noise = NoiseSource::seeded(derive_seed(cfg.seed, &[0x4e4f_4953, epoch as u64, step as u64]));
            let m = match train_step(
                &mut ckpt.generator,
                &mut ckpt.discriminator,
                &mut ckpt.gen_opt,
                &mut ckpt.disc_opt,
                &batch,
                cfg.lambda_l1,
                noise,
            ) {
                Ok(m) => m,
                Err(Error::Numeric(detail)) => {
                    let dump = match &opts.checkpoint_dir {
                        Some(dir) => {
                            let p = dir.join("diverged.ckpt");
                            ckpt.save(&p).ok().map(|_| p)
                        }
                        None => None,
                    };
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        step,
                        detail,
                        dump,
                    });
                }
                Err(e) => return Err(e),
            };
            rows.push(m);
        }
        let n = rows.len().max(1) as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            steps: rows.len(),
            mean_loss_d: rows.iter().map(|m| m.loss_d).sum::<f64>() / n,
            mean_loss_g_adv: rows.iter().map(|m| m.loss_g_adv).sum::<f64>() / n,
            mean_loss_l1: rows.iter().map(|m| m.loss_l1).sum::<f64>() / n,
        };
        info!(
            "{} epoch {}/{}: loss_D {:.4} loss_G_adv {:.4} L1 {:.4}",
            cfg.direction, stats.epoch, cfg.epochs, stats.mean_loss_d, stats.mean_loss_g_adv, stats.mean_loss_l1
        );
        ckpt.history.push(stats);
        ckpt.epoch += 1;
        if let Some(path) = &opts.metrics_csv {
            append_metrics(path, epoch, &rows)?;
        }
        if let Some(dir) = &opts.checkpoint_dir {
            ckpt.save(&epoch_checkpoint_path(dir, ckpt.epoch))?;
        }
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.momentum, c.resolution), (10, 1, 0.5, 256));
        assert_eq!(c.optimizer, OptimizerChoice::Sgd);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..Default::default()
            },
            TrainConfig {
                resolution: 100,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[2, 3]), derive_seed(5, &[2, 3]));
    }
}
