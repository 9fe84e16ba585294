//! Output-directory conventions: lock file, overwrite policy, flow cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cgan_anomaly::optflow::FlowStore;
use cgan_anomaly::perception::CACHE_ENV;

use crate::config::RunConfig;

pub const LOCK_FILE: &str = ".cgan-anomaly.lock";

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join(LOCK_FILE);
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    anyhow::anyhow!(
                        "{} is locked by another invocation (remove {} if it is stale)",
                        out.display(),
                        path.display()
                    )
                } else {
                    anyhow::Error::new(e).context(format!("creating {}", path.display()))
                }
            })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(OutputLock { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn is_nonempty(dir: &Path) -> bool {
    fs::read_dir(dir).is_ok_and(|mut it| it.any(|e| e.is_ok_and(|e| e.file_name() != LOCK_FILE)))
}

/// Makes `dir` an empty directory; existing content needs `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if is_nonempty(dir) {
        if !force {
            bail!("{} is not empty; pass --force to overwrite", dir.display());
        }
        fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Flow cache shared by train and detect, separated per dataset.
pub fn flow_store(cfg: &RunConfig, out: &Path) -> Result<FlowStore> {
    let root = match std::env::var_os(CACHE_ENV) {
        Some(c) if !c.is_empty() => PathBuf::from(c).join("flow"),
        _ => out.join("flow_cache"),
    };
    Ok(FlowStore::on_disk(
        cfg.flow.clone(),
        root.join(cfg.dataset_tag()),
        true,
    )?)
}

pub fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
