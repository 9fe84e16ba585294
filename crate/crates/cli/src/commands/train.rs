use anyhow::{bail, Context as _, Result};
use cgan_anomaly::checkpoint::Checkpoint;
use cgan_anomaly::trainer::{epoch_checkpoint_path, fit_flow_range, train_network, TrainOptions};
use cgan_anomaly::Direction;
use log::info;

use super::{latest_checkpoint, Context};
use crate::workspace::{flow_store, prepare_dir, OutputLock};
use crate::DirectionArg;

pub fn run(ctx: &Context, which: DirectionArg, resume: bool) -> Result<()> {
    let directions: &[Direction] = match which {
        DirectionArg::F2o => &[Direction::FrameToFlow],
        DirectionArg::O2f => &[Direction::FlowToFrame],
        DirectionArg::Both => &[Direction::FrameToFlow, Direction::FlowToFrame],
    };
    let configs = directions
        .iter()
        .map(|&d| ctx.cfg.train_config(d))
        .collect::<Result<Vec<_>>>()?;
    let split = ctx.cfg.load_dataset()?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let flows = flow_store(&ctx.cfg, &ctx.out)?;
    let train: Vec<_> = split.train.iter().collect();
    flows.prefetch(&train)?;
    let range = fit_flow_range(&split, &flows)?;

    for cfg in configs {
        let dir = ctx.checkpoint_dir(cfg.direction);
        let start = if resume {
            let path =
                latest_checkpoint(&dir).with_context(|| format!("--resume: no checkpoint in {}", dir.display()))?;
            info!("resuming {} from {}", cfg.direction, path.display());
            Some(Checkpoint::<f32>::load(&path)?)
        } else {
            prepare_dir(&dir, ctx.force)?;
            None
        };
        if let Some(c) = &start {
            if c.epoch >= cfg.epochs {
                bail!(
                    "{}: checkpoint already has {} of {} epochs",
                    dir.display(),
                    c.epoch,
                    cfg.epochs
                );
            }
        }
        std::fs::create_dir_all(&dir)?;
        let opts = TrainOptions {
            checkpoint_dir: Some(dir.clone()),
            metrics_csv: Some(dir.join("metrics.csv")),
            flow_range: Some(start.as_ref().and_then(|c| c.flow_range).unwrap_or(range)),
            stop_after: None,
        };
        let done = train_network::<f32>(&split, &cfg, &flows, &opts, start)?;
        println!("{}", epoch_checkpoint_path(&dir, done.epoch).display());
    }
    Ok(())
}
