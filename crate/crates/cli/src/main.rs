mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use miri_core::{Mask, MaskedDataset};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

/// Environment variable capping the worker threads used for parallel seeds.
const THREADS_ENV: &str = "MIRI_THREADS";

#[derive(Parser, Debug)]
#[command(name = "miri", version, about = "Mask-conditioned rectified-flow imputation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration; every field has a default.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base seed, overriding `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the configured Gaussian mixture into OUT/truth.csv.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Hide cells of a complete table; writes OUT/mask.csv and OUT/observed.csv.
    Mask {
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Impute a table with missing cells; writes OUT/imputed.csv, OUT/trace.csv and, with
    /// --truth, OUT/metrics.txt.
    Impute {
        observed: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Complete table used for diagnostics and metrics.
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
    },
    /// Print metrics of an imputed table against the truth on the masked cells.
    Eval {
        imputed: PathBuf,
        #[arg(long, value_name = "FILE")]
        truth: PathBuf,
        /// 0/1 table, 0 marking the cells that were hidden.
        #[arg(long, value_name = "FILE")]
        mask: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Also write DIR/metrics.txt.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Synth, mask, impute and evaluate for each seed, then print a summary table.
    ReproToy {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds; defaults to 0..=9, or to --seed alone when given.
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn context(run: &RunArgs) -> Result<Context, CliError> {
    Ok(Context::new(RunConfig::load(run.config.as_deref())?, run.seed))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))
}

fn load_mask(path: &Path, ctx: &Context) -> Result<Mask, CliError> {
    let (m, _) = commands::read_complete(path, ctx)?;
    Ok(Mask::from_matrix(&m)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Synth { run, out } => {
            commands::synth(&context(&run)?, &out)?;
        }
        Command::Mask { data, run, out } => {
            let ctx = context(&run)?;
            let (truth, header) = commands::read_complete(&data, &ctx)?;
            commands::mask(&ctx, &truth, header, &out)?;
        }
        Command::Impute {
            observed,
            run,
            out,
            truth,
        } => {
            let ctx = context(&run)?;
            let ds: MaskedDataset = commands::read_table(&observed, &ctx)?.into_dataset()?;
            let truth = truth.map(|p| commands::read_complete(&p, &ctx).map(|t| t.0)).transpose()?;
            commands::impute(&ctx, &ds, truth.as_ref(), &out)?;
        }
        Command::Eval {
            imputed,
            truth,
            mask,
            run,
            out,
        } => {
            let ctx = context(&run)?;
            let (imputed, _) = commands::read_complete(&imputed, &ctx)?;
            let (truth, _) = commands::read_complete(&truth, &ctx)?;
            let mask = load_mask(&mask, &ctx)?;
            let report = commands::eval(&ctx, &imputed, &truth, &mask, out.as_deref())?;
            print!("{}", commands::record(&report, &ctx.cfg.metrics));
        }
        Command::ReproToy { run, seeds, out } => {
            let ctx = context(&run)?;
            let seeds = match (seeds, run.seed) {
                (Some(s), _) => s,
                (None, Some(s)) => vec![s],
                (None, None) => (0..10).collect(),
            };
            print!("{}", commands::repro_toy(&ctx, &seeds, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let reason = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{reason}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
