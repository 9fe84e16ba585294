//! TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cgan_anomaly::dataset::{generate_synthetic_corpus, load_ucsd_layout, DatasetSplit, SyntheticSpec};
use cgan_anomaly::evaluation::PixelProtocol;
use cgan_anomaly::optflow::FlowConfig;
use cgan_anomaly::trainer::TrainConfig;
use cgan_anomaly::Direction;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Directory in the `Train/` + `Test/` layout.
    pub root: Option<PathBuf>,
    /// Generate the corpus in memory instead of reading it.
    pub synthetic: Option<SyntheticSpec>,
    /// Label written into reports.
    pub name: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub lambda: f64,
    /// `auto`, `alexnet` or `test_double`.
    pub extractor: String,
    pub weights: Option<PathBuf>,
    pub dropout: bool,
    pub dropout_seed: u64,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            lambda: cgan_anomaly::detector::DEFAULT_LAMBDA,
            extractor: "auto".into(),
            weights: None,
            dropout: true,
            dropout_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub dataset: DatasetSection,
    pub flow: FlowConfig,
    /// Settings shared by both networks.
    pub train: toml::Table,
    /// Per-direction overrides of `[train]`.
    pub train_f2o: toml::Table,
    pub train_o2f: toml::Table,
    pub detect: DetectSection,
    pub evaluate: PixelProtocol,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths are resolved against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(root) = &cfg.dataset.root {
            if root.is_relative() {
                cfg.dataset.root = Some(base.join(root));
            }
        }
        if let Some(w) = &cfg.detect.weights {
            if w.is_relative() {
                cfg.detect.weights = Some(base.join(w));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.detect.lambda >= 0.0) {
            bail!("detect.lambda must be >= 0, got {}", self.detect.lambda);
        }
        self.flow.validate()?;
        Ok(())
    }

    pub fn train_config(&self, direction: Direction) -> Result<TrainConfig> {
        let mut table = self.train.clone();
        let overrides = match direction {
            Direction::FrameToFlow => &self.train_f2o,
            Direction::FlowToFrame => &self.train_o2f,
        };
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        if table.contains_key("direction") {
            bail!("[train] must not set `direction`; it is chosen per network");
        }
        if let Some(seed) = self.seed {
            table.entry("seed").or_insert(toml::Value::Integer(seed as i64));
        }
        let mut cfg: TrainConfig = table.try_into().context("invalid [train] settings")?;
        cfg.direction = direction;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_dataset(&self) -> Result<DatasetSplit> {
        match (&self.dataset.root, &self.dataset.synthetic) {
            (Some(_), Some(_)) => bail!("[dataset] sets both `root` and `synthetic`"),
            (Some(root), None) => {
                if !root.is_dir() {
                    bail!("dataset root {} does not exist", root.display());
                }
                Ok(load_ucsd_layout(root)?)
            }
            (None, Some(spec)) => Ok(generate_synthetic_corpus(spec)?.split),
            (None, None) => bail!("no dataset configured: set [dataset] root or [dataset.synthetic]"),
        }
    }

    /// Stable identifier used to separate flow caches of different datasets.
    pub fn dataset_tag(&self) -> String {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        match (&self.dataset.root, &self.dataset.synthetic) {
            (Some(root), _) => {
                let canon = root.canonicalize().unwrap_or_else(|_| root.clone());
                canon.hash(&mut h);
                let name = canon.file_name().and_then(|n| n.to_str()).unwrap_or("dataset");
                format!("{name}-{:016x}", h.finish())
            }
            (None, Some(spec)) => {
                serde_json::to_string(spec).unwrap_or_default().hash(&mut h);
                format!("synthetic-{:016x}", h.finish())
            }
            _ => "unknown".into(),
        }
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.dataset.name {
            return n.clone();
        }
        match &self.dataset.root {
            Some(root) => root
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("dataset")
                .to_string(),
            None => "synthetic".into(),
        }
    }
}
