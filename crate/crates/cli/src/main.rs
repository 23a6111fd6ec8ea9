use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsma_uav::harness::{self, ExperimentConfig, Preset};

#[derive(Parser)]
#[command(name = "rsma-uav", version, about = "Joint UAV placement and RSMA precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point of a config and write CSV traces.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds (overrides `sweep.seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print converged values and ordering checks for a run directory.
    Summarize { dir: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn load(path: &Path, preset: Option<Preset>) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    harness::parse_config_with_preset(&text, preset).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config, None) {
            Ok(c) => {
                let runs = c.sweep.methods.len() * c.sweep.schemes.len() * c.sweep.snr_db.len() * c.sweep.seeds.len() * c.sweep.monte_carlo_drops.max(1);
                println!("{}: ok (preset {}, {runs} runs)", config.display(), c.preset);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Run { config, out, seeds, preset, jobs } => {
            let mut cfg = match load(&config, preset) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(s) = seeds {
                cfg.sweep.seeds = s;
            }
            if let Err(e) = cfg.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(CONFIG_ERROR);
            }
            match harness::run_experiment(&cfg, jobs) {
                Ok(report) => {
                    let failed = report.failed();
                    println!("{} runs, {failed} failed, written to {}", report.runs.len(), report.out_dir.display());
                    for r in report.runs.iter().filter(|r| r.outcome.is_err()) {
                        eprintln!("{}: {}", r.file.display(), r.outcome.as_ref().unwrap_err());
                    }
                    if failed == report.runs.len() {
                        ExitCode::from(RUNTIME_ERROR)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(RUNTIME_ERROR)
                }
            }
        }
        Command::Summarize { dir } => match harness::summarize(&dir) {
            Ok(summary) => {
                print!("{summary}");
                if summary.is_empty() {
                    ExitCode::from(RUNTIME_ERROR)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(RUNTIME_ERROR)
            }
        },
    }
}
