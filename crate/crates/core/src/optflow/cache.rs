use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{estimate_flow, load_precomputed_flow, write_flow, FlowConfig, FlowField};
use crate::dataset::VideoSequence;
use crate::error::{Error, Result};

type Key = (String, usize);

/// Flow provider for consecutive frame pairs, keyed by `(video id, t)`.
///
/// Fields are computed on demand; with a disk directory they are persisted as
/// `<dir>/<video>-<config hash>/<t>.flo` and reused across runs.
pub struct FlowStore {
    cfg: FlowConfig,
    hash: String,
    disk: Option<PathBuf>,
    memory: Option<Mutex<HashMap<Key, Arc<FlowField<f32>>>>>,
}

impl FlowStore {
    pub fn in_memory(cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(FlowStore {
            hash: cfg.hash(),
            cfg,
            disk: None,
            memory: Some(Mutex::new(HashMap::new())),
        })
    }

    pub fn on_disk(cfg: FlowConfig, dir: impl Into<PathBuf>, keep_in_memory: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(FlowStore {
            hash: cfg.hash(),
            cfg,
            disk: Some(dir.into()),
            memory: keep_in_memory.then(|| Mutex::new(HashMap::new())),
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn disk_path(&self, video_id: &str, t: usize) -> Option<PathBuf> {
        self.disk
            .as_ref()
            .map(|d| d.join(format!("{video_id}-{}", self.hash)).join(format!("{t:05}.flo")))
    }

    fn compute(&self, video: &VideoSequence, t: usize) -> Result<FlowField<f32>> {
        if t + 1 >= video.frames.len() {
            return Err(Error::DegenerateVideo {
                video: video.id.clone(),
                len: video.frames.len(),
            });
        }
        if let Some(path) = self.disk_path(&video.id, t) {
            if path.is_file() {
                return load_precomputed_flow(&path);
            }
            let f = estimate_flow(&video.frames[t], &video.frames[t + 1], &self.cfg)?;
            write_atomic(&f, &path)?;
            return Ok(f);
        }
        estimate_flow(&video.frames[t], &video.frames[t + 1], &self.cfg)
    }

    /// Flow from frame `t` to frame `t + 1`.
    pub fn get(&self, video: &VideoSequence, t: usize) -> Result<Arc<FlowField<f32>>> {
        let key = (video.id.clone(), t);
        if let Some(mem) = &self.memory {
            if let Some(f) = mem.lock().expect("flow cache poisoned").get(&key) {
                return Ok(Arc::clone(f));
            }
        }
        let f = Arc::new(self.compute(video, t)?);
        if let Some(mem) = &self.memory {
            mem.lock().expect("flow cache poisoned").insert(key, Arc::clone(&f));
        }
        Ok(f)
    }

    /// Computes every pair of every video in parallel. Results do not depend
    /// on scheduling.
    pub fn prefetch(&self, videos: &[&VideoSequence]) -> Result<()> {
        let jobs: Vec<(&VideoSequence, usize)> = videos
            .iter()
            .flat_map(|v| (0..v.frames.len().saturating_sub(1)).map(move |t| (*v, t)))
            .collect();
        jobs.par_iter().try_for_each(|(v, t)| self.get(v, *t).map(|_| ()))
    }
}

fn write_atomic(f: &FlowField<f32>, path: &Path) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_flow(f, &tmp)
        .and_then(|_| std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e)))
        .inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })
}
