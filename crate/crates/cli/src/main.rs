//! avenc: search, train and evaluate view-decoupled avatar encoders, and replay
//! streams with adaptive latent extrapolation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<avenc_core::Error> for CliError {
    fn from(e: avenc_core::Error) -> Self {
        use avenc_core::Error as E;
        match e {
            E::Tensor(_) | E::NonFinite(_) | E::InsufficientHistory { .. } | E::Io(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "avenc", version, about = "Hardware-aware avatar encoder search and adaptive latent extrapolation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search an architecture on the configured profile.
    Search,
    /// Train the architecture from scratch and report metrics.
    Train,
    /// Evaluate trained weights on the train and test traces.
    Eval,
    /// Replay the test trace with adaptive latent extrapolation.
    Simulate,
    /// Count FLOPs of an architecture.
    Flops {
        /// Architecture JSON or a bundled encoder (AVE-S, AVE-M, AVE-L).
        arch: Option<String>,
    },
    /// Score an architecture on the latency LUT.
    Latency {
        /// Architecture JSON or a bundled encoder (AVE-S, AVE-M, AVE-L).
        arch: Option<String>,
    },
    /// Write the synthetic train and test traces.
    GenData,
}

fn load_config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.paths.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Search => commands::search(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Flops { arch } => commands::flops(&cfg, arch.as_deref()),
        Command::Latency { arch } => commands::latency(&cfg, arch.as_deref()),
        Command::GenData => commands::gen_data(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
