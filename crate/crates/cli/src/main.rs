//! `qpa`: verification suite, training and comparison runs, noise sweeps and
//! shot-noise studies.
//!
//! Exit status: 0 on success, 1 when a claim or experiment check fails, 2 on
//! a usage or configuration error.

mod cmd;
mod config;
mod experiment;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qpa_core::attention::ScorerKind;
use qpa_core::quantum::NoiseChannel;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "qpa", version, about = "Two-qubit attention scoring: verification and experiments")]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the numerical claim suite and print a JSON report.
    Verify(cmd::verify::VerifyArgs),
    /// Train one model and write its history, summary and checkpoint.
    Train(cmd::train::TrainArgs),
    /// Train several scorers over several seeds and compare them pairwise.
    Compare(cmd::compare::CompareArgs),
    /// Evaluate a trained circuit-scored model under noise channels.
    NoiseSweep(cmd::noise::NoiseArgs),
    /// Measure the spread of finite-shot score estimates.
    Shots(cmd::shots::ShotsArgs),
}

/// Options shared by every command that reads a run configuration.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(short, long, env = "QPA_OUT_DIR", default_value = "qpa-out")]
    pub out_dir: PathBuf,
}

/// Training overrides shared by `train` and `compare`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Aggregation depth of pairwise scorers.
    #[arg(long)]
    pub depth: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut config::RunConfig) {
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr0 = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = v;
        }
        if let Some(v) = self.depth {
            cfg.model.depth = v;
        }
    }
}

/// A configuration or invocation problem; maps to exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

/// Progress reporting on stderr.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    quiet: bool,
}

impl Log {
    pub fn info(&self, msg: impl fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

pub fn create_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_scorer(s: &str) -> Result<ScorerKind, String> {
    s.parse().map_err(|e: qpa_core::Error| e.to_string())
}

pub fn parse_channel(s: &str) -> Result<NoiseChannel, String> {
    s.parse().map_err(|e: qpa_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Log { quiet: cli.quiet };
    let result = match cli.command {
        Command::Verify(a) => cmd::verify::run(a, log),
        Command::Train(a) => cmd::train::run(a, log),
        Command::Compare(a) => cmd::compare::run(a, log),
        Command::NoiseSweep(a) => cmd::noise::run(a, log),
        Command::Shots(a) => cmd::shots::run(a, log),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.chain().any(|c| c.is::<Usage>()) { 2 } else { 1 })
        }
    }
}
