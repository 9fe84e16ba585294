use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod workspace;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "cgan-anomaly",
    version,
    about = "Crowd abnormality detection with cross-channel conditional GANs"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training and test-time dropout seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run the parallel stages on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overwrite existing outputs of the command.
    #[arg(long, global = true)]
    force: bool,
    /// Fusion weight of the motion channel.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    F2o,
    O2f,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Frame,
    Pixel,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus in the Train/Test directory layout to --out.
    Synthesize {
        /// Corpus spec (TOML or JSON); defaults to [dataset.synthetic] or the built-in spec.
        spec: Option<PathBuf>,
    },
    /// Train the frame-to-flow and/or flow-to-frame networks.
    Train {
        #[arg(long, value_enum, default_value = "both")]
        direction: DirectionArg,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Compute abnormality maps for the test videos.
    Detect {
        /// Frame-to-flow checkpoint (default: latest under --out).
        #[arg(long)]
        f2o: Option<PathBuf>,
        /// Flow-to-frame checkpoint (default: latest under --out).
        #[arg(long)]
        o2f: Option<PathBuf>,
        /// Restrict to these test videos.
        #[arg(long = "video")]
        videos: Vec<String>,
    },
    /// Score saved maps against the ground truth.
    Evaluate {
        #[arg(long, value_enum, default_value = "both")]
        protocol: ProtocolArg,
        /// Maps directory (default: <out>/maps).
        #[arg(long)]
        maps: Option<PathBuf>,
    },
    /// Render red overlays of thresholded maps on the test frames.
    Visualize {
        /// Maps directory (default: <out>/maps).
        #[arg(long)]
        maps: Option<PathBuf>,
        /// Fixed display threshold instead of the per-video default.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
        cfg.train.insert("seed".into(), toml::Value::Integer(seed as i64));
        cfg.train_f2o.remove("seed");
        cfg.train_o2f.remove("seed");
        cfg.detect.dropout_seed = seed;
    }
    if let Some(lambda) = cli.lambda {
        cfg.detect.lambda = lambda;
    }
    cfg.deterministic |= cli.deterministic;
    cfg.validate()?;
    if cfg.deterministic {
        // must happen before the first parallel call builds the global pool
        std::env::set_var("RAYON_NUM_THREADS", "1");
    }
    let ctx = commands::Context {
        cfg,
        out: cli.out,
        force: cli.force,
    };
    match cli.command {
        Command::Synthesize { spec } => commands::synthesize::run(&ctx, spec.as_deref()),
        Command::Train { direction, resume } => commands::train::run(&ctx, direction, resume),
        Command::Detect { f2o, o2f, videos } => commands::detect::run(&ctx, f2o, o2f, &videos),
        Command::Evaluate { protocol, maps } => commands::evaluate::run(&ctx, protocol, maps),
        Command::Visualize { maps, threshold } => commands::visualize::run(&ctx, maps, threshold),
    }
}
