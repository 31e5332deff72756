mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use attnhar::HarError;
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{AblationAxis, RunInfo};
use config::{ExperimentConfig, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "attnhar", version, about = "Attention-based IMU sensor fusion for activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the training and model-initialization seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for leave-one-subject-out folds.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Records that the run must be bit-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on all but a held-out split, write a checkpoint and report.
    Train,
    /// Leave-one-subject-out cross validation.
    Loso,
    /// Sweep one experimental axis with LOSO evaluation.
    Ablate {
        #[arg(long, value_enum)]
        axis: AblationAxis,
    },
    /// Attention heatmaps, class activation maps and confusion image.
    Viz {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Generate a synthetic dataset as CSV files plus a manifest.
    Synth {
        /// Synthetic dataset spec (TOML).
        #[arg(long)]
        spec: PathBuf,
    },
}

fn error_kind(e: &HarError) -> &'static str {
    match e {
        HarError::Config(_) => "config",
        HarError::MissingPath(_) | HarError::UnexpectedPath(_) => "path",
        HarError::MalformedRow { .. } | HarError::Manifest { .. } | HarError::Data(_) => "data",
        HarError::Io { .. } => "io",
        _ => "runtime",
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarError::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.model.seed = seed;
    }
    if cli.deterministic {
        cfg.train.deterministic = true;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value, HarError> {
    let info = RunInfo {
        command: match &cli.command {
            Command::Train => "train",
            Command::Loso => "loso",
            Command::Ablate { .. } => "ablate",
            Command::Viz { .. } => "viz",
            Command::Synth { .. } => "synth",
        }
        .to_string(),
        jobs: cli.jobs.max(1),
    };
    match &cli.command {
        Command::Train => commands::cmd_train(&load_config(cli)?, &info),
        Command::Loso => commands::cmd_loso(&load_config(cli)?, &info),
        Command::Ablate { axis } => commands::cmd_ablate(&load_config(cli)?, *axis, &info),
        Command::Viz { checkpoint } => commands::cmd_viz(&load_config(cli)?, checkpoint, &info),
        Command::Synth { spec } => {
            let text = std::fs::read_to_string(spec).map_err(|source| HarError::Io {
                path: spec.clone(),
                source,
            })?;
            let synth: SynthConfig = toml::from_str(&text)
                .map_err(|e| HarError::Config(format!("{}: {e}", spec.display())))?;
            let seed = cli.seed.unwrap_or(synth.seed);
            let out = cli
                .out
                .clone()
                .ok_or_else(|| HarError::Config("synth needs --out".into()))?;
            commands::cmd_synth(&synth, seed, &out)
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim().to_string()),
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(error_kind(&e), e.to_string()),
    }
}
