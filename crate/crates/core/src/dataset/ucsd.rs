//! UCSD-style directory layout:
//!
//! ```text
//! <root>/Train/Train001/001.tif ...
//! <root>/Test/Test001/001.tif ...
//! <root>/Test/Test001_gt/001.bmp ...      optional masks, nonzero = abnormal
//! <root>/Test/Test001_labels.txt          optional, one 0/1 line per frame
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use log::warn;

use super::{DatasetSplit, Frame, GroundTruth, Mask, SyntheticSpec, VideoSequence};
use crate::error::{config_err, Error, Result};

/// Name of the JSON file recording the generator parameters of a synthetic corpus.
pub const SPEC_SIDECAR: &str = "spec.json";

const IMAGE_EXTS: [&str; 5] = ["tif", "tiff", "png", "bmp", "jpg"];

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Sort key: numeric value of the digits in the file stem, then the name.
fn numeric_key(p: &Path) -> (u64, String) {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(u64::MAX), stem.to_string())
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    Ok(out)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = list_dir(dir)?
        .into_iter()
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort_by_key(|p| numeric_key(p));
    Ok(files)
}

fn video_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = list_dir(dir)?
        .into_iter()
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| !n.ends_with("_gt") && !n.starts_with('.'))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn read_frames(dir: &Path, video_id: &str) -> Result<Vec<Frame>> {
    image_files(dir)?
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let img = image::open(p).map_err(|e| Error::image(p, e))?.to_rgb8();
            let (w, h) = img.dimensions();
            Frame::new(video_id, t, h as usize, w as usize, img.into_raw())
        })
        .collect()
}

fn read_masks(dir: &Path) -> Result<Vec<Mask>> {
    image_files(dir)?
        .iter()
        .map(|p| {
            let img = image::open(p).map_err(|e| Error::image(p, e))?.to_luma8();
            let (w, h) = img.dimensions();
            Ok(Mask {
                height: h as usize,
                width: w as usize,
                data: img.into_raw().into_iter().map(|v| v != 0).collect(),
            })
        })
        .collect()
}

fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match l {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Format(format!("{}: label `{other}` is not 0/1", path.display()))),
        })
        .collect()
}

fn labels_path(parent: &Path, name: &str) -> PathBuf {
    parent.join(format!("{name}_labels.txt"))
}

fn load_video(dir: &Path, is_test: bool) -> Result<VideoSequence> {
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| config_err!("unreadable directory name {}", dir.display()))?
        .to_string();
    let parent = dir.parent().unwrap_or(Path::new("."));
    let frames = read_frames(dir, &name)?;
    let gt_dir = parent.join(format!("{name}_gt"));
    let masks = if gt_dir.is_dir() {
        Some(read_masks(&gt_dir)?)
    } else {
        None
    };
    let lpath = labels_path(parent, &name);
    let labels = if lpath.is_file() {
        Some(read_labels(&lpath)?)
    } else {
        None
    };
    let (ground_truth, missing) = match (labels, masks) {
        (Some(frame_labels), pixel_masks) => (
            Some(GroundTruth {
                frame_labels,
                pixel_masks,
            }),
            false,
        ),
        (None, Some(masks)) => (Some(GroundTruth::from_masks(masks)), false),
        (None, None) => (None, true),
    };
    let mut v = VideoSequence::new(name, frames, ground_truth)?;
    v.labels_missing = missing && is_test;
    Ok(v)
}

/// Reads a `Train/` + `Test/` tree.
///
/// Test videos without labels or masks load with `labels_missing` set; the
/// error surfaces only when they are evaluated.
pub fn load_ucsd_layout(root: &Path) -> Result<DatasetSplit> {
    if !root.is_dir() {
        return Err(config_err!("dataset root {} does not exist", root.display()));
    }
    let train_dir = root.join("Train");
    if !train_dir.is_dir() {
        return Err(config_err!("missing {}", train_dir.display()));
    }
    let train = video_dirs(&train_dir)?
        .iter()
        .map(|d| load_video(d, false))
        .collect::<Result<Vec<_>>>()?;
    if train.is_empty() {
        return Err(config_err!("{} contains no training videos", train_dir.display()));
    }
    let test_dir = root.join("Test");
    let test = if test_dir.is_dir() {
        video_dirs(&test_dir)?
            .iter()
            .map(|d| load_video(d, true))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    for v in test.iter().filter(|v| v.labels_missing) {
        warn!("test video {} has no frame labels or masks", v.id);
    }
    Ok(DatasetSplit { train, test })
}

fn write_frame(f: &Frame, path: &Path) -> Result<()> {
    let img = RgbImage::from_fn(f.width() as u32, f.height() as u32, |x, y| {
        let i = (y as usize * f.width() + x as usize) * 3;
        Rgb([f.pixels()[i], f.pixels()[i + 1], f.pixels()[i + 2]])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

fn write_mask(m: &Mask, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(m.width as u32, m.height as u32, |x, y| {
        Luma([if m.data[y as usize * m.width + x as usize] {
            255
        } else {
            0
        }])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

fn write_video(v: &VideoSequence, parent: &Path) -> Result<()> {
    let dir = parent.join(&v.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for f in &v.frames {
        write_frame(f, &dir.join(format!("{:03}.png", f.index + 1)))?;
    }
    if let Some(gt) = &v.ground_truth {
        if let Some(masks) = &gt.pixel_masks {
            let gdir = parent.join(format!("{}_gt", v.id));
            fs::create_dir_all(&gdir).map_err(|e| Error::io(&gdir, e))?;
            for (t, m) in masks.iter().enumerate() {
                write_mask(m, &gdir.join(format!("{:03}.png", t + 1)))?;
            }
        }
        let lpath = labels_path(parent, &v.id);
        let text: String = gt.frame_labels.iter().map(|&l| if l { "1\n" } else { "0\n" }).collect();
        fs::write(&lpath, text).map_err(|e| Error::io(&lpath, e))?;
    }
    Ok(())
}

/// Writes `split` (lossless PNG) plus, for synthetic corpora, the spec sidecar.
pub fn write_ucsd_layout(split: &DatasetSplit, root: &Path, spec: Option<&SyntheticSpec>) -> Result<()> {
    for (sub, videos) in [("Train", &split.train), ("Test", &split.test)] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for v in videos {
            write_video(v, &dir)?;
        }
    }
    if let Some(spec) = spec {
        let path = root.join(SPEC_SIDECAR);
        let json = serde_json::to_string_pretty(spec).expect("spec serialises");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
