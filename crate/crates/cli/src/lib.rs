//! Batch front end: dataset generation, per-method training, prediction,
//! evaluation and cross-method comparison. All interaction is via config
//! files, flags and emitted artifacts; commands are idempotent given
//! identical inputs and seeds.

pub mod commands {
    pub mod compare;
    pub mod evaluate;
    pub mod generate;
    pub mod train;
}
pub mod config;

use clap::{Parser, Subcommand};
use config::{load_config, resolve_evaluate, resolve_scenario, resolve_train};
use rulkit_core::data::Split;
use rulkit_core::error::Error;
use rulkit_core::method::Method;
use std::ffi::OsString;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Shape { .. } => EXIT_DATA,
        Error::Domain { .. } | Error::Numeric(_) => EXIT_NUMERIC,
        Error::Io(_) => EXIT_IO,
    }
}

#[derive(Parser)]
#[command(
    name = "rulkit",
    version,
    about = "Uncertainty-quantified remaining-useful-life regression: synthetic prognostics data, seven UQ methods, calibration metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic run-to-failure dataset.
    Generate {
        /// JSON config with a `scenario` section (defaults to the desk preset).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one method on a generated dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Dataset directory (from `generate`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the reduced desk-scale epoch budget.
        #[arg(long, default_value_t = false)]
        desk: bool,
        /// Override the epoch budget (scales patience accordingly).
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Run predictive passes and write the prediction dump only.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Predict plus the full metrics report and curve exports.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluation split (the train view backs train-vs-test comparisons).
        #[arg(long)]
        split: Option<String>,
        /// Also render SVG line charts next to the CSV curves.
        #[arg(long, default_value_t = false)]
        svg: bool,
    },
    /// Aggregate reports into methods × metrics tables (mean ± std across
    /// seeds), sorted by ascending NLL.
    Compare {
        /// Report JSON files (one or more).
        #[arg(long, required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> rulkit_core::error::Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let had_file = config.is_some();
            let cfg = load_config(config.as_deref())?;
            let scenario = resolve_scenario(&cfg, had_file)?;
            scenario.validate()?;
            commands::generate::run(&scenario, seed, &out)
        }
        Command::Train {
            config,
            method,
            seed,
            data,
            out,
            desk,
            max_epochs,
        } => {
            let method = Method::parse(&method)?;
            let cfg = load_config(config.as_deref())?;
            let mut train_cfg = resolve_train(&cfg, method, seed, desk)?;
            if let Some(me) = max_epochs {
                let paper_patience = train_cfg.patience;
                train_cfg.patience = rulkit_core::trainer::TrainConfig::scaled_patience(
                    paper_patience * 500 / train_cfg.max_epochs.max(1),
                    me,
                );
                train_cfg.max_epochs = me;
            }
            train_cfg.validate()?;
            commands::train::run(&train_cfg, &data, &out)
        }
        Command::Predict {
            config,
            checkpoint,
            data,
            out,
            mc_samples,
            seed,
            split,
        } => {
            let cfg = load_config(config.as_deref())?;
            let section = resolve_evaluate(&cfg);
            let args = commands::evaluate::EvaluateArgs {
                checkpoint: &checkpoint,
                data: &data,
                out: &out,
                split: Split::parse(&split)?,
                mc_samples: mc_samples.unwrap_or(section.mc_samples),
                seed,
                section,
                svg: false,
                dump_only: true,
            };
            commands::evaluate::run(&args).map(|_| ())
        }
        Command::Evaluate {
            config,
            checkpoint,
            data,
            out,
            mc_samples,
            seed,
            split,
            svg,
        } => {
            let cfg = load_config(config.as_deref())?;
            let section = resolve_evaluate(&cfg);
            let split = Split::parse(split.as_deref().unwrap_or(&section.split))?;
            let args = commands::evaluate::EvaluateArgs {
                checkpoint: &checkpoint,
                data: &data,
                out: &out,
                split,
                mc_samples: mc_samples.unwrap_or(section.mc_samples),
                seed,
                section,
                svg,
                dump_only: false,
            };
            commands::evaluate::run(&args).map(|_| ())
        }
        Command::Compare { reports, out } => commands::compare::run(&reports, &out),
    }
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; usage problems are config errors.
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
