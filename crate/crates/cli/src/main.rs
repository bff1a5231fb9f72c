use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use uwcrlb::sweep::{self, SweepConfig, SweepOptions};

#[derive(Parser)]
#[command(name = "uwcrlb", version, about = "CRLB maps for bistatic underwater localization with communication waveforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep target positions over the grid and write per-case CSV maps.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated subset of 1,2,3.
        #[arg(long, value_delimiter = ',')]
        cases: Option<Vec<u8>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Wideband ambiguity surfaces and cuts for each configured waveform.
    Wbaf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Doppler-accuracy and ambiguity summary across waveforms.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte-Carlo check of an ML estimator against the bound.
    McCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn load(path: &PathBuf) -> Result<SweepConfig> {
    SweepConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            workers,
            cases,
            seed,
        } => {
            let cfg = SweepOptions { workers, cases, seed }.apply(&load(&config)?);
            let grid = sweep::run_sweep_to_dir(&cfg, &out)?;
            let flagged: usize = grid
                .maps
                .iter()
                .flat_map(|m| m.per_case.iter())
                .map(|(_, r)| r.iter().filter(|r| r.flag() == uwcrlb::CrlbFlag::Singular).count())
                .sum();
            println!(
                "{} points x {} waveforms x {} cases -> {} ({} singular cells)",
                grid.len(),
                grid.maps.len(),
                grid.cases.len(),
                out.display(),
                flagged
            );
        }
        Command::Wbaf { config, out } => {
            let files = sweep::run_wbaf_to_dir(&load(&config)?, &out)?;
            for f in files {
                println!("{}", out.join(f).display());
            }
        }
        Command::Compare { config } => {
            print!("{}", sweep::compare_waveforms(&load(&config)?)?);
        }
        Command::McCheck { config, trials, seed } => {
            let report = uwcrlb::mc_check_from_config(&load(&config)?, trials, seed)?;
            print!("{report}");
            if !report.bound_respected() {
                bail!("empirical covariance falls below the bound beyond MC tolerance");
            }
        }
        Command::DefaultConfig => {
            println!("{}", sweep::default_config().to_json_pretty()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
