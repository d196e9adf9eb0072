//! `qgrad` — train, attack, and measure robustness from the shell.
//!
//! Every subcommand reads one TOML config (see `config.rs` for the
//! schema) and writes its artifacts plus a `manifest.json` into the
//! output directory. Exit codes are part of the interface:
//!
//! * `0` success
//! * `2` bad configuration (unparseable TOML, unknown keys, invalid values)
//! * `3` a required input file does not exist
//! * `4` checkpoint exists but is corrupt or does not fit the dataset
//! * `1` anything else

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::Ctx;
use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// The configuration cannot be used as written.
    Config(String),
    /// An input file (config, dataset, checkpoint) is absent.
    MissingFile(PathBuf),
    /// The checkpoint was found but cannot serve this run.
    Checkpoint(String),
    /// Everything else, surfaced from the library.
    Other(qgrad::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::MissingFile(path) => {
                write!(f, "missing file: {}", path.display())
            }
            CliError::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
            CliError::Other(e) => write!(f, "{e}"),
        }
    }
}

impl From<qgrad::Error> for CliError {
    fn from(e: qgrad::Error) -> Self {
        match e {
            // Invalid values reaching the library are still config errors
            // from the user's point of view.
            qgrad::Error::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Other(other),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qgrad",
    version,
    about = "Adversarial attacks and robustness evaluation for small dense classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Model checkpoint to load (required by every command except `train`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory; defaults to the config's `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rayon thread count; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the train and attack seeds from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model (standard or adversarial) and write a checkpoint.
    Train(CommonArgs),
    /// Run one attack and archive the adversarial examples.
    Attack(CommonArgs),
    /// Measure robust accuracy over repeated attack runs.
    Eval(CommonArgs),
    /// Histogram the quantized gradient directions over a dataset.
    Histogram(CommonArgs),
    /// Evaluate attacks across a hyperparameter axis.
    Sweep(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Train(a)
            | Command::Attack(a)
            | Command::Eval(a)
            | Command::Histogram(a)
            | Command::Sweep(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Attack(_) => "attack",
            Command::Eval(_) => "eval",
            Command::Histogram(_) => "histogram",
            Command::Sweep(_) => "sweep",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let args = cli.command.common();

    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }

    if !args.config.is_file() {
        return Err(CliError::MissingFile(args.config.clone()));
    }
    let text = std::fs::read_to_string(&args.config).map_err(qgrad::Error::from)?;
    let config = RunConfig::parse(&text)?;

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| config.output.dir.clone());
    let ctx = Ctx {
        config,
        config_path: args.config.clone(),
        checkpoint: args.checkpoint.clone(),
        out_dir,
        seed: args.seed,
    };

    match cli.command {
        Command::Train(_) => commands::cmd_train(&ctx),
        Command::Attack(_) => commands::cmd_attack(&ctx),
        Command::Eval(_) => commands::cmd_eval(&ctx),
        Command::Histogram(_) => commands::cmd_histogram(&ctx),
        Command::Sweep(_) => commands::cmd_sweep(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qgrad {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
