use std::path::PathBuf;

use anyhow::{Context as _, Result};
use cgan_anomaly::evaluation::{
    align_to_frames, evaluate_frame_level, evaluate_pixel_level, pixel_frames, report_csv, roc_csv, write_text,
    LabeledVideo, MetricReport,
};
use serde::Serialize;

use super::{find_test_video, load_maps, Context, Manifest};
use crate::workspace::{prepare_dir, write_json, OutputLock};
use crate::ProtocolArg;

#[derive(Serialize)]
struct Summary<'a> {
    dataset: String,
    lambda: f64,
    extractor: &'a str,
    reports: &'a [MetricReport],
}

pub fn run(ctx: &Context, protocol: ProtocolArg, maps: Option<PathBuf>) -> Result<()> {
    let maps_dir = ctx.maps_dir(maps);
    let manifest = Manifest::load(&maps_dir)?;
    let split = ctx.cfg.load_dataset()?;

    let mut aligned = Vec::new();
    for entry in &manifest.videos {
        let video = find_test_video(&split, &entry.id)?;
        let gt = video
            .ground_truth
            .as_ref()
            .filter(|_| !video.labels_missing)
            .with_context(|| format!("video {} has no ground truth", video.id))?;
        let maps = load_maps(&maps_dir, entry, manifest.lambda)?;
        aligned.push((video.id.as_str(), align_to_frames(maps, video.len())?, gt));
    }
    let labeled: Vec<_> = aligned
        .iter()
        .map(|(id, maps, gt)| LabeledVideo {
            video_id: id,
            maps,
            ground_truth: gt,
        })
        .collect();

    let mut reports = Vec::new();
    if matches!(protocol, ProtocolArg::Frame | ProtocolArg::Both) {
        reports.push(evaluate_frame_level(&labeled)?);
    }
    if matches!(protocol, ProtocolArg::Pixel | ProtocolArg::Both) {
        // per video first so a missing mask names its video
        for v in &labeled {
            pixel_frames(v.maps, v.ground_truth, &ctx.cfg.evaluate)
                .with_context(|| format!("pixel-level protocol on video {}", v.video_id))?;
        }
        reports.push(evaluate_pixel_level(&labeled, &ctx.cfg.evaluate)?);
    }

    let _lock = OutputLock::acquire(&ctx.out)?;
    let eval_dir = ctx.out.join("eval");
    prepare_dir(&eval_dir, ctx.force)?;
    let dataset = ctx.cfg.dataset_name();
    write_text(&eval_dir.join("report.csv"), &report_csv(&dataset, &reports))?;
    for r in &reports {
        if let Some(curve) = &r.curve {
            write_text(&eval_dir.join(format!("roc_{}.csv", r.protocol)), &roc_csv(curve))?;
        }
    }
    write_json(
        &eval_dir.join("summary.json"),
        &Summary {
            dataset,
            lambda: manifest.lambda,
            extractor: &manifest.extractor,
            reports: &reports,
        },
    )?;
    for r in &reports {
        println!("{} AUC {:.4} EER {:.4}", r.protocol, r.auc, r.eer);
    }
    Ok(())
}
