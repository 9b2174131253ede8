//! Thin command-line front end. All behavior lives in the `thinkrl` library;
//! this binary loads a config file, applies flag overrides (flags only touch
//! fields that already exist in the config), runs the selected mode, and
//! prints the run echo as JSON.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime fault.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thinkrl::config::{InitSource, Mode, RunConfig};
use thinkrl::run::{run, RunError};

#[derive(Parser)]
#[command(name = "thinkrl", version, about = "Desk-scale RL training engine and data pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run RL training in zero or ptst mode.
    Train(TrainArgs),
    /// Build a cold-start dataset through the modality-bridging pipeline.
    Pipeline(PipelineArgs),
    /// Count self-reflection markers over a dataset.
    Stats(StatsArgs),
    /// Paired staged-vs-fixed-long training comparison over several seeds.
    Dynamics(DynamicsArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count (does not affect results).
    #[arg(long)]
    workers: Option<usize>,
    /// Print the run echo as compact JSON.
    #[arg(long)]
    compact: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training mode: zero | ptst. Defaults to the config file's mode.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Initial policy: uniform | primed | cold | `checkpoint:<path>`.
    #[arg(long)]
    init: Option<String>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input VQA samples (JSONL).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output dataset path (JSONL).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Replay fixture directory used by both backends.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input dataset or text corpus (JSONL or plain lines).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated marker list.
    #[arg(long, value_delimiter = ',')]
    markers: Option<Vec<String>>,
}

#[derive(Args)]
struct DynamicsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of paired seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

fn config_failure(violations: Vec<String>) -> ExitCode {
    let payload = serde_json::json!({ "error": "config", "violations": violations });
    eprintln!("{payload}");
    ExitCode::from(1)
}

fn load_config(common: &CommonArgs, mode: Mode) -> Result<RunConfig, ExitCode> {
    let mut config = match &common.config {
        Some(path) => match RunConfig::from_path(path) {
            Ok(config) => config,
            Err(err) => return Err(config_failure(vec![err.to_string()])),
        },
        None => RunConfig::default_for(mode),
    };
    config.mode = mode;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    Ok(config)
}

fn finish(config: &RunConfig, compact: bool) -> ExitCode {
    match run(config) {
        Ok(outcome) => {
            let text = if compact {
                outcome.echo.to_string()
            } else {
                serde_json::to_string_pretty(&outcome.echo).unwrap_or_else(|_| outcome.echo.to_string())
            };
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(RunError::Config(violations)) => config_failure(violations),
        Err(err) => {
            let code = err.exit_code();
            let payload = serde_json::json!({ "error": "runtime", "message": err.to_string() });
            eprintln!("{payload}");
            ExitCode::from(code as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Train(args) => {
            // The file's mode is the default; --mode overrides it.
            let file_mode = match (&args.mode, &args.common.config) {
                (Some(mode), _) => match mode.as_str() {
                    "zero" => Mode::Zero,
                    "ptst" => Mode::Ptst,
                    other => {
                        return config_failure(vec![format!(
                            "--mode {other:?} is not a training mode (expected zero | ptst)"
                        )])
                    }
                },
                (None, Some(path)) => match RunConfig::from_path(path) {
                    Ok(config) if matches!(config.mode, Mode::Zero | Mode::Ptst) => config.mode,
                    Ok(config) => {
                        return config_failure(vec![format!(
                            "config mode {} is not a training mode; pass --mode zero|ptst",
                            config.mode
                        )])
                    }
                    Err(err) => return config_failure(vec![err.to_string()]),
                },
                (None, None) => Mode::Ptst,
            };
            let mut config = match load_config(&args.common, file_mode) {
                Ok(config) => config,
                Err(code) => return code,
            };
            if let Some(path) = args.metrics_out {
                config.paths.metrics_out = Some(path);
            }
            if let Some(path) = args.checkpoint_out {
                config.paths.checkpoint_out = Some(path);
            }
            if let Some(init) = args.init {
                match InitSource::try_from(init) {
                    Ok(init) => config.train.init = init,
                    Err(err) => return config_failure(vec![err]),
                }
            }
            finish(&config, args.common.compact)
        }
        Command::Pipeline(args) => {
            let mut config = match load_config(&args.common, Mode::Pipeline) {
                Ok(config) => config,
                Err(code) => return code,
            };
            if let Some(path) = args.input {
                config.paths.dataset_in = Some(path);
            }
            if let Some(path) = args.output {
                config.paths.dataset_out = Some(path);
            }
            if let Some(path) = args.fixtures {
                config.paths.fixture_dir = Some(path);
            }
            finish(&config, args.common.compact)
        }
        Command::Stats(args) => {
            let mut config = match load_config(&args.common, Mode::Stats) {
                Ok(config) => config,
                Err(code) => return code,
            };
            if let Some(path) = args.input {
                config.paths.dataset_in = Some(path);
            }
            if let Some(path) = args.output {
                config.paths.summary_out = Some(path);
            }
            if let Some(markers) = args.markers {
                config.stats.markers = markers;
            }
            finish(&config, args.common.compact)
        }
        Command::Dynamics(args) => {
            let mut config = match load_config(&args.common, Mode::Dynamics) {
                Ok(config) => config,
                Err(code) => return code,
            };
            if let Some(seeds) = args.seeds {
                config.dynamics.seeds = seeds;
            }
            if let Some(path) = args.summary_out {
                config.paths.summary_out = Some(path);
            }
            finish(&config, args.common.compact)
        }
    }
}
