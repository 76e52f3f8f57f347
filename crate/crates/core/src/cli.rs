//! Command-line front end over [`crate::pipeline`].

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::pipeline::{Granularity, Pipeline, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "kinnet", version, about = "Political kinship networks from election records")]
pub struct Cli {
    /// TOML run configuration; every field has a default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides paths.out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for Leiden and the synthetic generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-province work.
    #[arg(long, global = true, env = "KINNET_WORKERS")]
    pub workers: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Election records CSV.
    #[arg(long)]
    pub elections: Option<PathBuf>,
    /// Auxiliary CSV used to fill missing middle names and parties.
    #[arg(long)]
    pub auxiliary: Option<PathBuf>,
    /// Socioeconomic table with province, year, POV, HDI.
    #[arg(long)]
    pub socio: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct DetectArgs {
    /// Modularity resolution.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Treat every edge as weight 1.
    #[arg(long)]
    pub unweighted: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize and link election records, assign hopper flags.
    Ingest(InputArgs),
    /// Export one GraphML file per province and year.
    Graph,
    /// Detect communities and flag dynastic officials.
    Detect(DetectArgs),
    /// Compute HHI, CGC, CCD and ACC per province and year.
    Metrics,
    /// Party hopping, overlap, bandwagoning and membership tables.
    Party,
    /// Linear trend of each indicator.
    Trend {
        /// Fit yearly means instead of pooled province-years.
        #[arg(long)]
        yearly_means: bool,
    },
    /// Panel regressions in both directions.
    Regress {
        #[arg(long)]
        socio: Option<PathBuf>,
        /// Restricted maximum likelihood for the mixed model.
        #[arg(long)]
        reml: bool,
    },
    /// Generate a synthetic election panel.
    Simulate {
        #[arg(long)]
        provinces: Option<usize>,
    },
    /// Assemble the run summary.
    Report,
    /// Run every stage in order.
    All {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        detect: DetectArgs,
        /// Simulate inputs first and analyse them.
        #[arg(long)]
        synthetic: bool,
    },
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &InputArgs) {
    if let Some(p) = &inputs.elections {
        cfg.paths.elections = Some(p.clone());
    }
    if let Some(p) = &inputs.auxiliary {
        cfg.paths.auxiliary = Some(p.clone());
    }
    if let Some(p) = &inputs.socio {
        cfg.paths.socio = Some(p.clone());
    }
}

fn apply_detect(cfg: &mut RunConfig, args: &DetectArgs) {
    if let Some(g) = args.gamma {
        cfg.leiden.gamma = g;
    }
    if args.unweighted {
        cfg.leiden.weighted = false;
    }
}

/// Resolves the configuration: file, then global flags, then command flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    match &cli.command {
        Command::Ingest(inputs) => apply_inputs(&mut cfg, inputs),
        Command::Detect(args) => apply_detect(&mut cfg, args),
        Command::Trend { yearly_means } if *yearly_means => cfg.trend.granularity = Granularity::YearlyMeans,
        Command::Regress { socio, reml } => {
            if let Some(p) = socio {
                cfg.paths.socio = Some(p.clone());
            }
            cfg.regression.reml |= *reml;
        }
        Command::Simulate { provinces: Some(n) } => cfg.simulate.n_provinces = *n,
        Command::All { inputs, detect, .. } => {
            apply_inputs(&mut cfg, inputs);
            apply_detect(&mut cfg, detect);
        }
        _ => {}
    }
    Ok(cfg)
}

fn configure_workers(workers: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("worker pool already configured: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    configure_workers(cfg.workers);
    let synthetic = matches!(cli.command, Command::All { synthetic: true, .. });
    if synthetic {
        Pipeline::run_synthetic(cfg)?;
        return Ok(());
    }
    let p = Pipeline::new(cfg);
    log::info!("output {} config {}", p.out.display(), p.config_hash());
    match cli.command {
        Command::Ingest(_) => p.ingest(),
        Command::Graph => p.graph(),
        Command::Detect(_) => p.detect(),
        Command::Metrics => p.metrics(),
        Command::Party => p.party(),
        Command::Trend { .. } => p.trend(),
        Command::Regress { .. } => p.regress(),
        Command::Simulate { .. } => p.simulate(),
        Command::Report => p.report(),
        Command::All { .. } => p.run_all(),
    }
}

pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
