use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use cgan_anomaly::dataset::{DatasetSplit, VideoSequence};
use cgan_anomaly::detector::{read_amp, AbnormalityMap};
use cgan_anomaly::optflow::FlowRange;
use cgan_anomaly::Direction;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub mod detect;
pub mod evaluate;
pub mod synthesize;
pub mod train;
pub mod visualize;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub force: bool,
}

impl Context {
    pub fn checkpoint_dir(&self, direction: Direction) -> PathBuf {
        self.out.join("checkpoints").join(direction_tag(direction))
    }

    pub fn maps_dir(&self, maps: Option<PathBuf>) -> PathBuf {
        maps.unwrap_or_else(|| self.out.join("maps"))
    }
}

pub fn direction_tag(direction: Direction) -> &'static str {
    match direction {
        Direction::FrameToFlow => "F2O",
        Direction::FlowToFrame => "O2F",
    }
}

/// Highest-numbered `epoch_NNN.ckpt` in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let entries = fs::read_dir(dir).ok()?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let n: usize = name.strip_prefix("epoch_")?.strip_suffix(".ckpt")?.parse().ok()?;
            Some((n, p))
        })
        .max_by_key(|(n, _)| *n)
        .map(|(_, p)| p)
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub id: String,
    /// Number of maps (`T - 1`).
    pub maps: usize,
    pub height: usize,
    pub width: usize,
    /// Video-wide maxima used to normalise the motion and appearance channels.
    pub m_o: f64,
    pub m_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub lambda: f64,
    pub extractor: String,
    pub resolution: usize,
    pub dropout_seed: Option<u64>,
    pub flow_range: FlowRange,
    /// Heatmap PNGs store `255 · A / heatmap_scale`.
    pub heatmap_scale: f64,
    pub f2o_checkpoint: String,
    pub o2f_checkpoint: String,
    pub videos: Vec<ManifestVideo>,
}

impl Manifest {
    pub fn load(maps_dir: &Path) -> Result<Self> {
        let path = maps_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn map_path(maps_dir: &Path, video: &str, t: usize) -> PathBuf {
    maps_dir.join(video).join(format!("{t:04}.amp"))
}

/// Raw maps of one manifest entry, in frame order.
pub fn load_maps(maps_dir: &Path, entry: &ManifestVideo, lambda: f64) -> Result<Vec<AbnormalityMap<f32>>> {
    (0..entry.maps)
        .map(|t| {
            let path = map_path(maps_dir, &entry.id, t);
            let (height, width, values) = read_amp(&path)?;
            if (height, width) != (entry.height, entry.width) {
                bail!(
                    "{}: {height}x{width} map, manifest says {}x{}",
                    path.display(),
                    entry.height,
                    entry.width
                );
            }
            Ok(AbnormalityMap {
                height,
                width,
                values,
                frame_index: t,
                lambda,
            })
        })
        .collect()
}

pub fn find_test_video<'a>(split: &'a DatasetSplit, id: &str) -> Result<&'a VideoSequence> {
    split
        .test
        .iter()
        .find(|v| v.id == id)
        .with_context(|| format!("test video {id} not found in the dataset"))
}
