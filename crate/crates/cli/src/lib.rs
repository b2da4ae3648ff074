//! The `simcon` command line: an experiment file plus one subcommand per
//! pipeline stage. Tables go to stdout, JSON-lines logs to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod error;
mod logging;

use config::SplitName;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "simcon", version, about = "Pretrain, finetune and evaluate contrastive channel-independent forecasters")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment file (TOML). Falls back to $SIMCON_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Table format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log level for the JSON-lines log on stderr.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Text,
    Json,
}

impl From<Format> for simcon::eval::OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => Self::Csv,
            Format::Text => Self::Text,
            Format::Json => Self::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Stage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    Lambda,
    Tau,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pretrain collection and report per-dataset window counts.
    BuildCollection {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Pretrain one model per horizon.
    Pretrain {
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Finetune pretrained models on one target dataset.
    Finetune {
        #[arg(long)]
        target: String,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Pretrained checkpoint; only with a single horizon.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Average similarity of each target's windows to every pretrain dataset.
    Similarity {
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<SplitName>,
    },
    /// Test-split MSE/MAE of saved checkpoints on every target.
    Evaluate {
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = Stage::Pretrain)]
        stage: Stage,
        /// Add ratio columns against the baseline table.
        #[arg(long)]
        ratios: bool,
    },
    /// Pretrain across a grid of λ or τ and report zero-shot errors.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Check every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        batches: usize,
    },
    /// Write the three synthetic regimes as CSV files.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Also write `mix.csv`, this weight of sine plus the rest AR(1).
        #[arg(long)]
        mixture: Option<f64>,
        /// Also write an `experiment.toml` pretraining on the regimes.
        #[arg(long)]
        with_config: bool,
    },
}

/// Parses `std::env::args`, runs the command and maps failures to exit codes.
pub fn run_main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::EXIT_CONFIG } else { 0 });
        }
    };
    logging::init(cli.global.log_level);
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub(crate) type CliResult<T = ()> = Result<T, CliError>;
