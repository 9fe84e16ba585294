//! Self-describing container for a trained network pair and its optimisers.
//!
//! Layout: `b"CGCK"`, `u32` format version, `u64` header length, a JSON
//! header, then little-endian parameter blobs in the order listed by the
//! header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{Direction, Discriminator, DiscriminatorTopology, Generator, GeneratorTopology};
use crate::nn::Parameterized;
use crate::optflow::FlowRange;
use crate::optim::{Optimizer, OptimizerKind};
use crate::scalar::Scalar;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss_d: f64,
    pub mean_loss_g_adv: f64,
    pub mean_loss_l1: f64,
}

/// Training state after some number of completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config: TrainConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub gen_opt: Optimizer<T>,
    pub disc_opt: Optimizer<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    /// Flow encoding frozen from the training split.
    pub flow_range: Option<FlowRange>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    kind: OptimizerKind,
    lr: f64,
    steps: u64,
}

#[derive(Serialize, Deserialize)]
struct BlobEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    direction: Direction,
    generator: GeneratorTopology,
    discriminator: DiscriminatorTopology,
    config: TrainConfig,
    config_hash: String,
    epoch: usize,
    history: Vec<EpochStats>,
    flow_range: Option<FlowRange>,
    gen_opt: OptimizerHeader,
    disc_opt: OptimizerHeader,
    blobs: Vec<BlobEntry>,
}

fn slices<T>(v: &[Vec<T>]) -> Vec<&[T]> {
    v.iter().map(Vec::as_slice).collect()
}

fn blocks<T: Scalar>(c: &Checkpoint<T>) -> Vec<(String, Vec<&[T]>)> {
    let own = slices::<T>;
    vec![
        ("generator".into(), c.generator.params()),
        ("discriminator".into(), c.discriminator.params()),
        ("generator_opt_first".into(), own(&c.gen_opt.first)),
        ("generator_opt_second".into(), own(&c.gen_opt.second)),
        ("discriminator_opt_first".into(), own(&c.disc_opt.first)),
        ("discriminator_opt_second".into(), own(&c.disc_opt.second)),
    ]
}

fn fill<T: Scalar>(dst: Vec<&mut [T]>, src: &mut &[u8], what: &str) -> Result<()> {
    for block in dst {
        let need = block.len() * T::BYTES;
        if src.len() < need {
            return Err(Error::Format(format!("checkpoint truncated inside {what}")));
        }
        for (i, v) in block.iter_mut().enumerate() {
            *v = T::read_le(&src[i * T::BYTES..]);
        }
        *src = &src[need..];
    }
    Ok(())
}

fn moment_buffers<T: Scalar, P: Parameterized<T>>(net: &P, present: bool) -> Vec<Vec<T>> {
    if present {
        net.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    } else {
        Vec::new()
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn direction(&self) -> Direction {
        self.generator.direction
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let blocks = blocks(self);
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            dtype: T::DTYPE.into(),
            direction: self.generator.direction,
            generator: self.generator.topology.clone(),
            discriminator: self.discriminator.topology.clone(),
            config: self.config.clone(),
            config_hash: self.config.hash(),
            epoch: self.epoch,
            history: self.history.clone(),
            flow_range: self.flow_range,
            gen_opt: OptimizerHeader {
                kind: self.gen_opt.kind,
                lr: self.gen_opt.lr,
                steps: self.gen_opt.steps,
            },
            disc_opt: OptimizerHeader {
                kind: self.disc_opt.kind,
                lr: self.disc_opt.lr,
                steps: self.disc_opt.steps,
            },
            blobs: blocks
                .iter()
                .map(|(name, b)| BlobEntry {
                    name: name.clone(),
                    len: b.iter().map(|s| s.len()).sum(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(json.len() + 16);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, b) in &blocks {
            for s in b {
                for &v in s.iter() {
                    v.write_le(&mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(Error::Format("checkpoint truncated inside header".into()));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "checkpoint stores {} parameters, requested {}",
                header.dtype,
                T::DTYPE
            )));
        }
        let mut generator = Generator::new(header.generator, header.direction, 0);
        let mut discriminator = Discriminator::new(header.discriminator, 0);
        let has_second = |k: OptimizerKind| matches!(k, OptimizerKind::Adam { .. });
        let mut gen_opt = Optimizer {
            kind: header.gen_opt.kind,
            lr: header.gen_opt.lr,
            steps: header.gen_opt.steps,
            first: moment_buffers(&generator, true),
            second: moment_buffers(&generator, has_second(header.gen_opt.kind)),
        };
        let mut disc_opt = Optimizer {
            kind: header.disc_opt.kind,
            lr: header.disc_opt.lr,
            steps: header.disc_opt.steps,
            first: moment_buffers(&discriminator, true),
            second: moment_buffers(&discriminator, has_second(header.disc_opt.kind)),
        };
        let expected: Vec<usize> = [
            generator.param_count(),
            discriminator.param_count(),
            gen_opt.first.iter().map(Vec::len).sum(),
            gen_opt.second.iter().map(Vec::len).sum(),
            disc_opt.first.iter().map(Vec::len).sum(),
            disc_opt.second.iter().map(Vec::len).sum(),
        ]
        .into();
        let stored: Vec<usize> = header.blobs.iter().map(|b| b.len).collect();
        if stored != expected {
            return Err(Error::Format(format!(
                "checkpoint blob sizes {stored:?} do not match topology {expected:?}"
            )));
        }
        let mut rest = &body[hlen..];
        if rest.len() != expected.iter().sum::<usize>() * T::BYTES {
            return Err(Error::Format("checkpoint payload has the wrong length".into()));
        }
        fill(generator.params_mut(), &mut rest, "generator")?;
        fill(discriminator.params_mut(), &mut rest, "discriminator")?;
        fill(
            gen_opt.first.iter_mut().map(|v| v.as_mut_slice()).collect(),
            &mut rest,
            "optimiser state",
        )?;
        fill(
            gen_opt.second.iter_mut().map(|v| v.as_mut_slice()).collect(),
            &mut rest,
            "optimiser state",
        )?;
        fill(
            disc_opt.first.iter_mut().map(|v| v.as_mut_slice()).collect(),
            &mut rest,
            "optimiser state",
        )?;
        fill(
            disc_opt.second.iter_mut().map(|v| v.as_mut_slice()).collect(),
            &mut rest,
            "optimiser state",
        )?;
        Ok(Checkpoint {
            config: header.config,
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            epoch: header.epoch,
            history: header.history,
            flow_range: header.flow_range,
        })
    }

    /// Writes atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{initial_checkpoint, OptimizerChoice};

    fn tiny(opt: OptimizerChoice) -> TrainConfig {
        TrainConfig {
            resolution: 8,
            generator_channels: 2,
            discriminator_channels: 2,
            optimizer: opt,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        for opt in [OptimizerChoice::Sgd, OptimizerChoice::Adam] {
            let mut c = initial_checkpoint::<f32>(&tiny(opt), Some(FlowRange::symmetric(3.0))).unwrap();
            c.gen_opt.first[0][0] = 0.25;
            c.epoch = 2;
            let back = Checkpoint::<f32>::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn dtype_mismatch_and_corruption_rejected() {
        let c = initial_checkpoint::<f32>(&tiny(OptimizerChoice::Sgd), None).unwrap();
        let bytes = c.to_bytes();
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes), Err(Error::Format(_))));
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(Checkpoint::<f32>::from_bytes(b"nope"), Err(Error::Format(_))));
    }
}
