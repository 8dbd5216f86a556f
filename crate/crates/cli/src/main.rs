//! `mpe`: validate models, sample, solve MPE queries, build training data, and run
//! the drift and evaluation experiments.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 on data or model
//! errors.

mod commands;
mod params;
mod plot;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use params::Params;

#[derive(Parser)]
#[command(
    name = "mpe",
    version,
    about = "Local search for MPE inference with learned neighbor scoring"
)]
struct Cli {
    /// Flat TOML config (or a previous run's manifest.toml); flags win on conflict
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log errors only
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Log debug messages
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model (and optional evidence/weights) and report its size
    Validate(Input),
    /// Draw Gibbs samples from the joint distribution
    Sample(Input),
    /// Solve one MPE query with greedy or GLS+ search
    Solve(Input),
    /// Generate a labeled neighbor dataset for scorer training
    Datagen(Input),
    /// Simulate the biased distance walk, or measure a trajectory's reducing rate
    Drift(Input),
    /// Compare search methods over a query set at fixed step checkpoints
    Eval(Input),
    /// Sweep the network mixing weight lambda
    Sweep(Input),
}

#[derive(Args)]
struct Input {
    /// UAI model file (same as --model)
    #[arg(value_name = "MODEL")]
    model_file: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<mpe_core::Error> for CliError {
    fn from(e: mpe_core::Error) -> Self {
        match e {
            mpe_core::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else if cli.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, input) = match cli.command {
        Command::Validate(i) => ("validate", i),
        Command::Sample(i) => ("sample", i),
        Command::Solve(i) => ("solve", i),
        Command::Datagen(i) => ("datagen", i),
        Command::Drift(i) => ("drift", i),
        Command::Eval(i) => ("eval", i),
        Command::Sweep(i) => ("sweep", i),
    };
    let file = match &cli.config {
        Some(path) => params::load_config(path)?,
        None => Params::default(),
    };
    let mut p = input.params.over(&file)?;
    if let Some(m) = input.model_file {
        if input.params.model.as_ref().is_some_and(|f| *f != m) {
            return Err(CliError::Usage("model given both positionally and with --model".into()));
        }
        p.model = Some(m);
    }
    if p.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let ctx = commands::Ctx {
        command: name,
        config: cli.config.as_deref(),
    };
    match name {
        "validate" => commands::validate(&ctx, p),
        "sample" => commands::sample(&ctx, p),
        "solve" => commands::solve(&ctx, p),
        "datagen" => commands::datagen(&ctx, p),
        "drift" => commands::drift(&ctx, p),
        "eval" => commands::eval(&ctx, p),
        _ => commands::sweep(&ctx, p),
    }
}
