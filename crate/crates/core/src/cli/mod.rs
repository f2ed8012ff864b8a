//! Command-line front end: `run` executes a configuration into a run
//! directory, `report` summarizes one.

mod config;
mod run;
mod tables;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, LevelFilter};

pub use config::{DataConfig, DataSource, Kind, NetworkChoice, NetworkConfig, RunConfig};
pub use run::{
    build_spec, collect, config_hash, load_data, plan, read_run_config, run, summarize, RecordKey, RunDir,
    RunOptions, RunSummary, CONFIG_FILE,
};
pub use tables::{
    agg_csv, agg_header, parse_row, parse_tickets_csv, record_row, report_table, tickets_csv, AGG_VERSION,
    TICKETS_HEADER, TICKETS_VERSION,
};

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "lottery", version, about = "Lottery-ticket pruning experiments")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment configuration.
    Run {
        config: PathBuf,
        /// Continue a partially completed run directory.
        #[arg(long)]
        resume: bool,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<u32>,
        /// Use single precision.
        #[arg(long)]
        f32: bool,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trials trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (defaults to the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the aggregated table of a finished run directory.
    Report { dir: PathBuf },
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Warn,
        (false, 1) => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp_secs()
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            resume,
            trials,
            f32,
            seed,
            jobs,
            out,
        } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::invalid(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = RunConfig::parse(&text)?;
            if let Some(t) = trials {
                if t == 0 {
                    return Err(Error::invalid("--trials must be at least 1"));
                }
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.f32 |= f32;
            // Relative dataset paths are relative to the config file; stored
            // absolute so the echoed config works from any directory.
            if let DataSource::Mnist { dir } | DataSource::Cifar10 { dir } = &mut cfg.data.source {
                if dir.is_relative() {
                    *dir = std::path::absolute(config.parent().unwrap_or(Path::new(".")).join(&*dir))?;
                }
            }
            let out = match out {
                Some(o) => o,
                None if cfg.output.is_relative() => {
                    config.parent().unwrap_or(Path::new(".")).join(&cfg.output)
                }
                None => cfg.output.clone(),
            };
            let summary = run(&cfg, &out, RunOptions { resume, jobs })?;
            info!("wrote {} records to {}", summary.records.len(), out.display());
            print!("{}", report_table(&summary.aggregate));
            Ok(())
        }
        Command::Report { dir } => {
            print!("{}", report_table(&summarize(&dir)?));
            Ok(())
        }
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code: 0 success, 1 usage or configuration error, 2 data
/// or I/O error, 3 runtime failure.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
