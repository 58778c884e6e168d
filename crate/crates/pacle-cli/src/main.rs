//! `pacle` — batch front end: dataset generation, driver runs with
//! baselines across seeds, and the verification suite.
//!
//! Exit codes: 0 success, 1 property/run failure, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pacle::experiment::{cmd_generate, cmd_run, cmd_verify, ExperimentConfig, VerifyOptions};

#[derive(Parser)]
#[command(name = "pacle", about = "Offline actor-critic batch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for seed fan-out (overridden by PACLE_JOBS).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the instance MDP spec and one dataset file per seed.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to an inclusive seed range `a..b`.
        #[arg(long, value_parser = parse_seed_range)]
        seed_range: Option<(u64, u64)>,
        /// Output directory (overrides the config's `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the driver and configured baselines per seed; write traces and
    /// a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_seed_range)]
        seed_range: Option<(u64, u64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite and emit a pass/fail report.
    Verify {
        /// Optional JSON file with verification options.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| "expected a..b".to_string())?;
    let a: u64 = a.parse().map_err(|e| format!("bad start: {e}"))?;
    let b: u64 = b.parse().map_err(|e| format!("bad end: {e}"))?;
    if b < a {
        return Err("empty seed range".into());
    }
    Ok((a, b))
}

fn load_config(
    path: &Path,
    seed_range: Option<(u64, u64)>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut config = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;
    if let Some((a, b)) = seed_range {
        config.seeds = (a..=b).collect();
    }
    if let Some(dir) = out {
        config.out_dir = Some(dir.display().to_string());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = std::env::var("PACLE_JOBS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cli.jobs);
    if let Some(n) = jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("note: thread pool already initialized; --jobs ignored");
        }
    }

    match cli.command {
        Command::Generate {
            config,
            seed_range,
            out,
        } => {
            let config = match load_config(&config, seed_range, out) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            match cmd_generate(&config, Path::new(".")) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(pacle::Error::Validation(e)) | Err(pacle::Error::Shape(e)) => {
                    eprintln!("config error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Run {
            config,
            seed_range,
            out,
        } => {
            let config = match load_config(&config, seed_range, out) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            match cmd_run(&config, Path::new(".")) {
                Ok(summary) => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&summary).expect("summary serializes")
                    );
                    if summary.failures == summary.seed_results.len() {
                        eprintln!("all seeds failed");
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(pacle::Error::Validation(e)) | Err(pacle::Error::Shape(e)) => {
                    eprintln!("config error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Verify { config, out } => {
            let options = match config {
                None => VerifyOptions::default(),
                Some(path) => {
                    let text = match std::fs::read_to_string(&path) {
                        Ok(t) => t,
                        Err(e) => {
                            eprintln!("config error: {}: {e}", path.display());
                            return ExitCode::from(2);
                        }
                    };
                    match serde_json::from_str(&text) {
                        Ok(o) => o,
                        Err(e) => {
                            eprintln!("config error: {e}");
                            return ExitCode::from(2);
                        }
                    }
                }
            };
            match cmd_verify(&options) {
                Ok(report) => {
                    let text =
                        serde_json::to_string_pretty(&report).expect("report serializes");
                    println!("{text}");
                    if let Some(path) = out {
                        if let Some(parent) = path.parent() {
                            let _ = std::fs::create_dir_all(parent);
                        }
                        if let Err(e) = std::fs::write(&path, &text) {
                            eprintln!("error writing report: {e}");
                            return ExitCode::from(1);
                        }
                    }
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
