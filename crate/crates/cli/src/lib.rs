//! The `diff2dist` command line: generate, train, eval, dist, embed, sweep
//! and attribute.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{GenerateMode, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "diff2dist", version, about = "Learned spectral distances between attributed graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// 1 unweighted, 2 fixed Gaussian, 3 tuned Gaussian, 4 learned network.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub method: Option<u8>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate a labelled dataset, or the full parameter sweep.
    Generate {
        #[arg(long, value_enum)]
        mode: Option<GenerateMode>,
    },
    /// Fit a model; writes checkpoint.json and loss.csv.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// kNN accuracy over K; writes knn.csv.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Writes distances.csv and labels.csv.
    Dist {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Isomap coordinates; writes embedding.csv.
    Embed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Simulates every grid config; writes manifest.csv and sweep/.
    Sweep {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Mean parameters of the nearest simulation graphs; writes attribution.csv.
    Attribute {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Dist { .. } => "dist",
            Command::Embed { .. } => "embed",
            Command::Sweep { .. } => "sweep",
            Command::Attribute { .. } => "attribute",
        }
    }
}

/// Config file, then flags, then seed propagation and validation.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(method) = global.method {
        cfg.method = method;
    }
    if let Some(threads) = global.threads {
        cfg.threads = Some(threads);
    }
    cfg.propagate_seed();
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed invocation and returns its one-line JSON summary.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let mut cfg = resolve_config(&cli.global)?;
    if let Some(threads) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let out = &cli.global.out;
    match &cli.command {
        Command::Generate { mode } => {
            if let Some(mode) = mode {
                cfg.generate_mode = *mode;
            }
            commands::generate(&cfg, out)
        }
        Command::Train { data } => commands::train(&cfg, data, out),
        Command::Eval { data, checkpoint } => commands::eval(&cfg, data, checkpoint.as_deref(), out),
        Command::Dist { data, checkpoint } => commands::dist(&cfg, data, checkpoint.as_deref(), out),
        Command::Embed { data, checkpoint } => commands::embed(&cfg, data, checkpoint.as_deref(), out),
        Command::Sweep { steps, limit } => {
            if let Some(steps) = steps {
                cfg.sweep.simulation.steps = *steps;
            }
            if limit.is_some() {
                cfg.sweep.limit = *limit;
            }
            commands::sweep(&cfg, out)
        }
        Command::Attribute {
            data,
            checkpoint,
            manifest,
            k,
        } => {
            if let Some(k) = k {
                cfg.attribution_k = *k;
            }
            commands::attribute(&cfg, data, checkpoint, manifest, out)
        }
    }
}
