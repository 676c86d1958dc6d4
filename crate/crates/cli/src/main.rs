use std::path::PathBuf;
use std::process::ExitCode;

use agarsynth::config::PipelineConfig;
use agarsynth::pipeline;
use agarsynth::stylize::{ProcessBridge, StyleBridge, StyleMode};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::error;

#[derive(Parser)]
#[command(name = "agarsynth", version, about = "Synthetic Petri-dish dataset generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; relative paths inside resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the file).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores (overrides the file).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory of this command (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment annotated colonies into a cluster bank.
    Extract(Common),
    /// Compose synthetic patches from the cluster bank and empty dishes.
    Generate(Common),
    /// Restyle a generated dataset.
    Stylize(Common),
    /// Score detector predictions (mAP, MAE, sMAPE).
    Evaluate(Common),
    /// Render annotated contact sheets of a dataset.
    Preview {
        #[command(flatten)]
        common: Common,
        /// Number of patches to render.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(c) => {
            let mut cfg = load(&c)?;
            if let Some(o) = c.out {
                cfg.paths.bank = o;
            }
            let index = pipeline::run_extract(&cfg)?;
            println!(
                "{} clusters written to {} ({} discarded)",
                index.clusters.len(),
                cfg.paths.bank.display(),
                index.discarded.total()
            );
        }
        Command::Generate(c) => {
            let mut cfg = load(&c)?;
            if let Some(o) = c.out {
                cfg.paths.dataset = o;
            }
            let m = pipeline::run_generate(&cfg)?;
            println!(
                "{} patches written to {} (mean {:.2} colonies, {} short)",
                m.completed.len(),
                cfg.paths.dataset.display(),
                m.mean_colonies,
                m.short_patches
            );
        }
        Command::Stylize(c) => {
            let mut cfg = load(&c)?;
            if let Some(o) = c.out {
                cfg.paths.stylized = o;
            }
            let bridge = match cfg.stylize.mode {
                StyleMode::External => Some(ProcessBridge::from_env()?),
                _ => None,
            };
            let record = pipeline::run_stylize(&cfg, bridge.as_ref().map(|b| b as &dyn StyleBridge))?;
            println!(
                "{} patches stylized into {}",
                record.patches.len(),
                cfg.paths.stylized.display()
            );
        }
        Command::Evaluate(c) => {
            let mut cfg = load(&c)?;
            if let Some(o) = c.out {
                cfg.paths.metrics = o;
            }
            let r = pipeline::run_evaluate(&cfg)?;
            println!("mAP {:.4}  MAE {:.4}  sMAPE {:.2}%", r.map, r.mae, r.smape);
        }
        Command::Preview { common, count } => {
            let mut cfg = load(&common)?;
            if let Some(o) = common.out {
                cfg.paths.preview = o;
            }
            let n = count.unwrap_or(cfg.preview.count);
            let sheets = pipeline::run_preview(&cfg.paths.dataset, &cfg.paths.preview, n)?;
            println!("{} sheets written to {}", sheets.len(), cfg.paths.preview.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err
        .chain()
        .any(|c| c.downcast_ref::<agarsynth::Error>().is_some_and(agarsynth::Error::is_validation));
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
