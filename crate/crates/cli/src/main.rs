use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pls_cli::audit::{cmd_audit, render_table, SlopeBand};
use pls_cli::plot::cmd_plot;
use pls_cli::run::{cmd_run, schedule_dump, RunOptions, SCHEDULE_FILE};
use pls_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pls", version, about = "Simulate and audit progressive learning and sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep cell and write a timestamped run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Parent of the run directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for replications.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Dotted config key assignment, e.g. `sweep.horizon=[1000]`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render SVG charts from a run directory's curves.csv.
    Plot {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit regret and uplink scaling across run directories.
    Audit {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Where to write audit.json (defaults to the first run directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Regret slope band as LOW,HIGH.
        #[arg(long)]
        band: Option<SlopeBand>,
        #[arg(long, default_value_t = 2000)]
        resamples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the epoch parameter table of every sweep cell.
    Schedule {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also write schedule.txt into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed, parallelism, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let dir = cmd_run(cfg, &RunOptions { out, seed, parallelism })?;
            println!("{}", dir.display());
        }
        Command::Plot { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.clone());
            for path in cmd_plot(&run_dir, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Audit { run_dirs, out, band, resamples, seed } => {
            let entries = cmd_audit(&run_dirs, band, resamples, seed)?;
            print!("{}", render_table(&entries));
            let out = out.unwrap_or_else(|| run_dirs[0].clone());
            std::fs::create_dir_all(&out)?;
            let json = serde_json::to_string_pretty(&entries).map_err(anyhow::Error::from)?;
            std::fs::write(out.join("audit.json"), json)?;
        }
        Command::Schedule { config, overrides, out } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let text = schedule_dump(&cfg)?;
            print!("{text}");
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                std::fs::write(out.join(SCHEDULE_FILE), text)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
