//! `prx`: command-line front end for the perioperation core.
//!
//! Every subcommand writes a table to stdout as CSV (default) or one JSON
//! object per line (`--format jsonl`). Diagnostics go to stderr. Exit
//! codes: 0 success, 1 domain error, 2 usage error.
//!
//! Relative paths are resolved against `PRX_DATA_DIR` when it is set:
//! outputs always land there, inputs are looked up there when they do not
//! exist relative to the working directory.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

mod cmd_export;
mod cmd_linkage;
mod cmd_metrics;
mod cmd_model;
mod cmd_session;
mod cmd_tactile;
mod cmd_torque;
pub mod output;

pub use output::{Cell, Format, Table};

pub const DATA_DIR_VAR: &str = "PRX_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "prx", version, about = "Perioperation data tools: kinematics, torque recovery, sessions and episodes")]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hand model presets and joint workspace.
    #[command(subcommand)]
    Model(cmd_model::ModelCmd),
    /// Four-bar coupling stages.
    #[command(subcommand)]
    Linkage(cmd_linkage::LinkageCmd),
    /// Joint torques from contact forces.
    #[command(subcommand)]
    Torque(cmd_torque::TorqueCmd),
    /// Tactile frames.
    #[command(subcommand)]
    Tactile(cmd_tactile::TactileCmd),
    /// Record a session from synthetic sources or an existing file.
    Record(cmd_session::RecordArgs),
    /// Print every sample of a session in timestamp order.
    Replay(cmd_session::ReplayArgs),
    /// Resample a session onto a fixed-rate grid.
    Align(cmd_session::AlignArgs),
    /// Header and per-stream statistics of a session or episode file.
    Inspect(cmd_session::InspectArgs),
    /// Structural check of a session or episode file.
    Validate(cmd_session::ValidateArgs),
    /// Turn a session into a training episode.
    Export(cmd_export::ExportArgs),
    /// Randomize states and wrist images of an episode.
    Augment(cmd_export::AugmentArgs),
    /// Evaluation metrics.
    #[command(subcommand)]
    Metrics(cmd_metrics::MetricsCmd),
}

/// Marks an error as a usage error (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Shared state handed to every subcommand.
pub(crate) struct Ctx<'a> {
    pub format: Format,
    pub data_dir: Option<PathBuf>,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl Ctx<'_> {
    pub fn input(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn output(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn emit(&mut self, table: &Table) -> anyhow::Result<()> {
        table.write(self.format, self.out)
    }

    pub fn note(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "{msg}");
    }
}

/// Runs one invocation. `args` includes the program name.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let data_dir = std::env::var_os(DATA_DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from);
    let mut ctx = Ctx {
        format: cli.format,
        data_dir,
        out,
        err,
    };
    let result = match cli.command {
        Command::Model(c) => cmd_model::run(c, &mut ctx),
        Command::Linkage(c) => cmd_linkage::run(c, &mut ctx),
        Command::Torque(c) => cmd_torque::run(c, &mut ctx),
        Command::Tactile(c) => cmd_tactile::run(c, &mut ctx),
        Command::Record(a) => cmd_session::record(a, &mut ctx),
        Command::Replay(a) => cmd_session::replay(a, &mut ctx),
        Command::Align(a) => cmd_session::align(a, &mut ctx),
        Command::Inspect(a) => cmd_session::inspect(a, &mut ctx),
        Command::Validate(a) => cmd_session::validate(a, &mut ctx),
        Command::Export(a) => cmd_export::export(a, &mut ctx),
        Command::Augment(a) => cmd_export::augment(a, &mut ctx),
        Command::Metrics(c) => cmd_metrics::run(c, &mut ctx),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let usage_error = e.downcast_ref::<UsageError>().is_some();
            let _ = writeln!(ctx.err, "error: {e:#}");
            if usage_error {
                2
            } else {
                1
            }
        }
    }
}

/// Parses `a,b,c` into floats.
pub(crate) fn float_list(raw: &str) -> anyhow::Result<Vec<f64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("`{s}` is not a number"))))
        .collect()
}
