use std::path::Path;

use anyhow::{Context as _, Result};
use cgan_anomaly::dataset::{generate_synthetic_corpus, write_ucsd_layout, SyntheticSpec};
use log::info;

use super::Context;
use crate::workspace::{prepare_dir, OutputLock};

fn read_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
    let spec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?
    };
    Ok(spec)
}

pub fn run(ctx: &Context, spec_file: Option<&Path>) -> Result<()> {
    let spec = match (spec_file, &ctx.cfg.dataset.synthetic) {
        (Some(p), _) => read_spec(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => SyntheticSpec::default(),
    };
    spec.validate()?;
    prepare_dir(&ctx.out, ctx.force)?;
    let _lock = OutputLock::acquire(&ctx.out)?;
    let corpus = generate_synthetic_corpus(&spec)?;
    write_ucsd_layout(&corpus.split, &ctx.out, Some(&spec))?;
    info!(
        "wrote {} train and {} test videos to {}",
        corpus.split.train.len(),
        corpus.split.test.len(),
        ctx.out.display()
    );
    println!("{}", ctx.out.display());
    Ok(())
}
