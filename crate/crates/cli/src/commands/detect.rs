use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use cgan_anomaly::checkpoint::Checkpoint;
use cgan_anomaly::detector::{heatmap_image, write_amp, Detector, Fusion};
use cgan_anomaly::perception::{extractor_by_name, ConvBackbone, FeatureExtractor};
use cgan_anomaly::Direction;
use log::{info, warn};

use super::{direction_tag, latest_checkpoint, map_path, Context, Manifest, ManifestVideo, MANIFEST_FILE};
use crate::workspace::{flow_store, prepare_dir, write_json, OutputLock};

fn checkpoint_path(ctx: &Context, given: Option<PathBuf>, direction: Direction) -> Result<PathBuf> {
    if let Some(p) = given {
        if !p.is_file() {
            bail!("checkpoint {} does not exist", p.display());
        }
        return Ok(p);
    }
    let dir = ctx.checkpoint_dir(direction);
    latest_checkpoint(&dir).with_context(|| {
        format!(
            "no {} checkpoint in {}; run `train` or pass --{}",
            direction,
            dir.display(),
            direction_tag(direction).to_lowercase()
        )
    })
}

fn extractor(ctx: &Context) -> Result<Box<dyn FeatureExtractor<f32>>> {
    let d = &ctx.cfg.detect;
    let name = match d.extractor.as_str() {
        "auto" if d.weights.is_some() || ConvBackbone::<f32>::cached_weights_path().is_some() => "alexnet",
        "auto" => {
            warn!("no backbone weights found; using the test-double feature extractor");
            "test_double"
        }
        other => other,
    };
    Ok(extractor_by_name(name, d.weights.as_deref())?)
}

fn load(path: &Path) -> Result<Checkpoint<f32>> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn run(ctx: &Context, f2o: Option<PathBuf>, o2f: Option<PathBuf>, only: &[String]) -> Result<()> {
    let f2o = checkpoint_path(ctx, f2o, Direction::FrameToFlow)?;
    let o2f = checkpoint_path(ctx, o2f, Direction::FlowToFrame)?;
    let flow_net = load(&f2o)?;
    let frame_net = load(&o2f)?;
    let range = flow_net
        .flow_range
        .or(frame_net.flow_range)
        .context("checkpoints carry no flow range")?;
    if frame_net.flow_range.is_some_and(|r| r != range) {
        bail!("the two checkpoints were trained with different flow ranges");
    }
    let split = ctx.cfg.load_dataset()?;
    for id in only {
        super::find_test_video(&split, id)?;
    }
    let videos: Vec<_> = split
        .test
        .iter()
        .filter(|v| only.is_empty() || only.contains(&v.id))
        .collect();
    if videos.is_empty() {
        bail!("no test videos to process");
    }
    let extractor = extractor(ctx)?;

    let _lock = OutputLock::acquire(&ctx.out)?;
    let flows = flow_store(&ctx.cfg, &ctx.out)?;
    let mut detector = Detector::new(
        &flow_net.generator,
        &frame_net.generator,
        extractor.as_ref(),
        &flows,
        range,
    )?;
    detector.dropout_seed = ctx.cfg.detect.dropout.then_some(ctx.cfg.detect.dropout_seed);
    let maps_dir = ctx.out.join("maps");
    prepare_dir(&maps_dir, ctx.force)?;

    let lambda = ctx.cfg.detect.lambda;
    let scale = 1.0 + lambda;
    let mut entries = Vec::new();
    for video in videos {
        let det = detector.detect_video(video)?;
        let maps = det.fuse(Fusion::Combined(lambda))?;
        let dir = maps_dir.join(&video.id);
        fs::create_dir_all(&dir)?;
        for m in &maps {
            let path = map_path(&maps_dir, &video.id, m.frame_index);
            write_amp(&path, m.height, m.width, &m.values)?;
            let png = path.with_extension("png");
            heatmap_image(m, scale)
                .save(&png)
                .with_context(|| format!("writing {}", png.display()))?;
        }
        info!(
            "{}: {} maps (m_O {:.4}, m_S {:.4})",
            video.id,
            maps.len(),
            det.m_o,
            det.m_s
        );
        entries.push(ManifestVideo {
            id: video.id.clone(),
            maps: maps.len(),
            height: det.target_dims.0,
            width: det.target_dims.1,
            m_o: det.m_o as f64,
            m_s: det.m_s as f64,
        });
    }
    let manifest = Manifest {
        lambda,
        extractor: extractor.id().to_string(),
        resolution: detector.resolution(),
        dropout_seed: detector.dropout_seed,
        flow_range: range,
        heatmap_scale: scale,
        f2o_checkpoint: f2o.display().to_string(),
        o2f_checkpoint: o2f.display().to_string(),
        videos: entries,
    };
    write_json(&maps_dir.join(MANIFEST_FILE), &manifest)?;
    println!("{}", maps_dir.display());
    Ok(())
}
