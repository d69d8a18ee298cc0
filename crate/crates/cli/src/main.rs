//! `rnr`: degrade, diagnose, restore, train and evaluate from the command line.
//!
//! Exit status: 0 success, 1 configuration or usage, 2 I/O, 3 partial failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rnr_core::grpo::TauRule;
use rnr_core::Error;

#[derive(Parser, Debug)]
#[command(name = "rnr", version, about = "Reason-then-restore image pipeline")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "REASON_RESTORE_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a degraded dataset from a directory of clean PNGs.
    Degrade(DegradeArgs),
    /// Write a diagnostic report beside each input image.
    Diagnose(DiagnoseArgs),
    /// Diagnose and restore images.
    Restore(RestoreArgs),
    /// Tune the restoration policy on a dataset's train split.
    Train(TrainArgs),
    /// Score restored images against a dataset's clean references.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Directory of clean PNG images.
    #[arg(long)]
    pub clean: PathBuf,
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator config (JSON); defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Record,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// A PNG file or a directory of them.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct RestoreArgs {
    /// A PNG file or a directory of them.
    pub input: PathBuf,
    /// Output directory; each result keeps its input file name.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained policy; without it the report-seeded parameters are used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset root written by `rnr degrade`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory for the checkpoint and the step log.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Candidates per group.
    #[arg(long, default_value_t = 8)]
    pub group: usize,
    /// `adaptive` or a positive temperature.
    #[arg(long, default_value = "adaptive", value_parser = parse_tau, allow_hyphen_values = true)]
    pub tau: TauRule,
    #[arg(long, default_value_t = 0.02, allow_hyphen_values = true)]
    pub lr: f64,
    /// Images per step.
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset root written by `rnr degrade`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding `<id>.png` for each record.
    #[arg(long)]
    pub restored: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_tau(s: &str) -> Result<TauRule, String> {
    let tau: TauRule = s.parse().map_err(|e: Error| e.to_string())?;
    tau.validate().map_err(|e| e.to_string())?;
    Ok(tau)
}

/// A failure already mapped to its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const CONFIG: u8 = 1;
    pub const IO: u8 = 2;
    pub const PARTIAL: u8 = 3;

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: Self::CONFIG,
            message: message.into(),
        }
    }

    pub fn partial(message: impl Into<String>) -> Self {
        Self {
            code: Self::PARTIAL,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Decode { .. } => Failure::IO,
            _ => Failure::CONFIG,
        };
        let message = match &e {
            Error::InvalidParam { name, reason } => format!("--{name}: {reason}"),
            other => other.to_string(),
        };
        Self { code, message }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::config("--jobs: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Degrade(a) => commands::degrade(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Restore(a) => commands::restore(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Failure::CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
