mod args;
mod commands;
mod settings;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use limescope::Error;

use crate::args::{Cli, Command};
use crate::settings::{default_args, FileConfig};

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    /// Dataset ingestion failures count as I/O regardless of cause.
    Ingest(Error),
    Core(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 usage, 2 I/O or config, 3 data, 4 classifier bridge.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) | CliError::Ingest(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidParam(_) => 1,
                Error::Io { .. } | Error::Decode { .. } | Error::Serialization(_) => 2,
                Error::Bridge(_) | Error::Normalization { .. } => 4,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Config(m) => f.write_str(m),
            CliError::Ingest(e) | CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

/// Parses arguments, splicing in config-file defaults for flags the user
/// left unset.
fn parse(argv: Vec<OsString>) -> Result<(Cli, Option<FileConfig>), CliError> {
    let first = Cli::command()
        .try_get_matches_from(&argv)
        .unwrap_or_else(|e| exit_clap(e));
    let config = first
        .get_one::<std::path::PathBuf>("config")
        .map(|p| FileConfig::load(p))
        .transpose()?;
    let mut argv = argv;
    if let (Some(cfg), Some((_, sub))) = (&config, first.subcommand()) {
        argv.extend(default_args(cfg, sub)?);
    }
    let matches = Cli::command()
        .try_get_matches_from(&argv)
        .unwrap_or_else(|e| exit_clap(e));
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| exit_clap(e));
    Ok((cli, config))
}

fn exit_clap(e: clap::Error) -> ! {
    let _ = e.print();
    std::process::exit(if e.use_stderr() { 1 } else { 0 })
}

fn run(cli: &Cli, config: Option<&FileConfig>) -> Result<(), CliError> {
    match &cli.command {
        Command::Split(a) => commands::cmd_split(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a, config),
        Command::Explain(a) => commands::cmd_explain(a, config),
        Command::Stability(a) => commands::cmd_stability(a, config),
        Command::Serve(a) => commands::cmd_serve(a, config),
    }
}

fn main() -> ExitCode {
    let result =
        parse(std::env::args_os().collect()).and_then(|(cli, config)| run(&cli, config.as_ref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("limescope: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
