//! `qdarboux`: run lattice solvers and Bäcklund transforms from a JSON job.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod table;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::{run, Output};
use crate::config::{Command, Format, Job, JobFile, Overrides};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qdarboux", version, about = "Solve q-difference Riccati systems and their Bäcklund transforms")]
struct Cli {
    /// Command to run; may instead be given as `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON job description.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_base: Option<f64>,
    #[arg(long)]
    grid_q: Option<f64>,
    #[arg(long)]
    grid_depth: Option<usize>,
    /// Transform parameter; repeat or separate with commas for several.
    #[arg(long = "t", value_delimiter = ',', allow_negative_numbers = true)]
    t: Vec<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Largest acceptable residual; exceeding it exits with status 4.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Use the differential (q = 1) formulas on a quadrature grid.
    #[arg(long)]
    classic: bool,
    /// Emit every n-th row.
    #[arg(long)]
    stride: Option<usize>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => JobFile::load(path)?,
        None => JobFile::default(),
    };
    let over = Overrides {
        command: cli.command,
        grid_base: cli.grid_base,
        grid_q: cli.grid_q,
        grid_depth: cli.grid_depth,
        t: cli.t,
        format: cli.format,
        tolerance: cli.tolerance,
        classic: cli.classic,
        stride: cli.stride,
    };
    let job = Job::resolve(file, over)?;
    let outcome = run(&job)?;
    let stdout = io::stdout().lock();
    match &outcome.output {
        Output::Table(t) => t.write(job.format, stdout)?,
        Output::Report(r) => table::write_json(r, stdout)?,
    }
    io::stdout()
        .flush()
        .map_err(|e| CliError::Output(e.to_string()))?;
    match outcome.failure {
        Some(msg) => Err(CliError::Verification(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qdarboux: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
