use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use cgan_anomaly::dataset::{Frame, VideoSequence};
use cgan_anomaly::detector::AbnormalityMap;
use cgan_anomaly::evaluation::{align_to_frames, frame_level_roc, frame_scores};
use image::RgbImage;
use log::info;

use super::{find_test_video, load_maps, Context, Manifest};
use crate::workspace::{prepare_dir, OutputLock};

/// Threshold whose frame-level operating point is closest to the equal
/// error condition, or `None` when the video lacks one of the two classes.
fn eer_threshold(video: &VideoSequence, maps: &[AbnormalityMap<f32>]) -> Option<f64> {
    let gt = video.ground_truth.as_ref().filter(|_| !video.labels_missing)?;
    let scores = frame_scores(maps).ok()?;
    let curve = frame_level_roc(&scores, &gt.frame_labels).ok()?;
    curve
        .points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .min_by(|a, b| {
            let da = (a.fpr - (1.0 - a.tpr)).abs();
            let db = (b.fpr - (1.0 - b.tpr)).abs();
            da.total_cmp(&db)
        })
        .map(|p| p.threshold)
}

/// Source frame with pixels whose value exceeds `threshold` blended halfway to red.
pub fn overlay(frame: &Frame, map: &AbnormalityMap<f32>, threshold: f64) -> Result<RgbImage> {
    let (h, w) = frame.dims();
    if (map.height, map.width) != (h, w) {
        bail!("map {}x{} vs frame {h}x{w}", map.height, map.width);
    }
    let mut img = RgbImage::from_raw(w as u32, h as u32, frame.pixels().to_vec()).context("frame buffer size")?;
    for (px, &a) in img.pixels_mut().zip(&map.values) {
        if a as f64 > threshold {
            let [r, g, b] = px.0;
            px.0 = [((r as u16 + 255) / 2) as u8, g / 2, b / 2];
        }
    }
    Ok(img)
}

pub fn run(ctx: &Context, maps: Option<PathBuf>, threshold: Option<f64>) -> Result<()> {
    let maps_dir = ctx.maps_dir(maps);
    let manifest = Manifest::load(&maps_dir)?;
    let split = ctx.cfg.load_dataset()?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let out_dir = ctx.out.join("overlays");
    prepare_dir(&out_dir, ctx.force)?;
    for entry in &manifest.videos {
        let video = find_test_video(&split, &entry.id)?;
        let maps = load_maps(&maps_dir, entry, manifest.lambda)?;
        if maps.len() + 1 != video.len() && maps.len() != video.len() {
            bail!("video {}: {} maps for {} frames", video.id, maps.len(), video.len());
        }
        let maps = align_to_frames(maps, video.len())?;
        let tau = match threshold {
            Some(t) => t,
            None => eer_threshold(video, &maps)
                .unwrap_or_else(|| 0.5 * maps.iter().map(|m| m.max_value() as f64).fold(0.0, f64::max)),
        };
        let dir = out_dir.join(&video.id);
        fs::create_dir_all(&dir)?;
        for (frame, map) in video.frames.iter().zip(&maps) {
            let path = dir.join(format!("{:04}.png", frame.index));
            overlay(frame, map, tau)?
                .save(&path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        info!("{}: {} overlays at threshold {tau:.4}", video.id, video.len());
    }
    println!("{}", out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame {
        let pixels = (0..8 * 8 * 3).map(|i| (i * 7 % 256) as u8).collect();
        Frame::new("v", 0, 8, 8, pixels).unwrap()
    }

    fn map(value: f32) -> AbnormalityMap<f32> {
        AbnormalityMap {
            height: 8,
            width: 8,
            values: vec![value; 64],
            frame_index: 0,
            lambda: 2.0,
        }
    }

    #[test]
    fn zero_map_leaves_frame_untouched() {
        let f = frame();
        assert_eq!(overlay(&f, &map(0.0), 0.0).unwrap().into_raw(), f.pixels());
    }

    #[test]
    fn full_map_tints_every_pixel() {
        let f = frame();
        let img = overlay(&f, &map(3.0), 1.5).unwrap();
        for (p, src) in img.pixels().zip(f.pixels().chunks(3)) {
            assert!(p.0[0] >= src[0] && p.0[1] <= src[1] && p.0[2] <= src[2]);
            assert_eq!(p.0[0], ((src[0] as u16 + 255) / 2) as u8);
        }
    }
}
