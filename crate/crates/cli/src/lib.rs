//! Command-line front end: predict, simulate, mc-average, fit and kinetics.
//!
//! Exit codes: 0 success, 1 I/O error, 2 validation error, 3 numerical failure
//! (non-convergence under `--strict`).

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{fit::FitArgs, kinetics::KineticsArgs, mc_average::McArgs, Context};
use config::{FitOverrides, LoadedConfig};
use error::{CliError, CliResult};

pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "zfepr", version, about = "Zero-field EPR spectra via NV cross-relaxation")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed (overrides [run] seed; default 0)
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Output directory (overrides [run] out_dir; default ./out)
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Treat non-convergence as an error (exit code 3)
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stick spectrum: transition frequencies, strengths and assignments
    Predict,
    /// Synthetic spectrum CSV with JSON sidecar
    Simulate {
        /// Also write a baseline-only trace (seed + 1)
        #[arg(long)]
        with_blank: bool,
    },
    /// Monte Carlo ensemble average of the cross-relaxation rate
    McAverage {
        #[arg(long)]
        samples: Option<u64>,
        /// Index into the observable transitions (default: strongest)
        #[arg(long)]
        transition: Option<usize>,
        /// Add depth-doubling and sample-count scaling runs
        #[arg(long)]
        scaling: bool,
    },
    /// Peak fit of a spectrum CSV, optionally after blank subtraction
    Fit {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "CSV")]
        blank: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Peak-area kinetics over a spectrum series, and/or a power-law fit
    Kinetics {
        /// CSV with columns time_h,path
        #[arg(long, value_name = "CSV")]
        manifest: Option<PathBuf>,
        /// CSV with columns power_w_per_cm2,t_d_h[,t_d_err_h]
        #[arg(long, value_name = "CSV")]
        powerlaw: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// gaussian, lorentzian or double_lorentzian
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub peaks: Option<usize>,
    /// slanted or offset
    #[arg(long)]
    pub baseline: Option<String>,
    /// Initial centers in MHz, comma separated
    #[arg(long, value_delimiter = ',')]
    pub centers: Option<Vec<f64>>,
}

impl From<&ModelArgs> for FitOverrides {
    fn from(m: &ModelArgs) -> Self {
        FitOverrides { model: m.model.clone(), peaks: m.peaks, baseline: m.baseline.clone(), centers: m.centers.clone() }
    }
}

pub fn context(cli: &Cli) -> CliResult<Context> {
    let cfg = LoadedConfig::load(cli.config.as_deref())?;
    let run = cfg.config.run.clone().unwrap_or_default();
    let workers = cli.workers.or(run.workers);
    if workers == Some(0) {
        return Err(CliError::Validation("--workers must be at least 1".into()));
    }
    let out = match (&cli.out, &run.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => cfg.base_dir.join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from(DEFAULT_OUT_DIR),
    };
    Ok(Context { seed: cli.seed.or(run.seed).unwrap_or(0), workers, out, strict: cli.strict, cfg })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli)?;
    output::ensure_dir(&ctx.out)?;
    zfepr::parallel::with_workers(ctx.workers, || match &cli.command {
        Command::Predict => commands::predict::run(&ctx),
        Command::Simulate { with_blank } => commands::simulate::run(&ctx, *with_blank),
        Command::McAverage { samples, transition, scaling } => {
            commands::mc_average::run(&ctx, &McArgs { samples: *samples, transition: *transition, scaling: *scaling })
        }
        Command::Fit { input, blank, model } => {
            commands::fit::run(&ctx, &FitArgs { input: input.clone(), blank: blank.clone(), model: model.into() })
        }
        Command::Kinetics { manifest, powerlaw, model } => commands::kinetics::run(
            &ctx,
            &KineticsArgs { manifest: manifest.clone(), powerlaw: powerlaw.clone(), model: model.into() },
        ),
    })?
}
