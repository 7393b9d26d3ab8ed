//! `esmlab` experiment runner.

mod args;
mod config;
mod error;
mod run;
mod table;

use std::ffi::OsString;
use std::io::Write;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Format};
use error::CliError;

fn parse(argv: &[OsString]) -> Result<(Cli, clap::ArgMatches), CliError> {
    let root = Cli::command();
    let m = root.clone().try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&m).unwrap_or_else(|e| e.exit());
    let Some(path) = &cli.config else { return Ok((cli, m)) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cmd_path = config::command_path(&m);
    let flags = config::pairs_to_flags(&root, &cmd_path, &config::parse_pairs(&text)?)?;
    let argv = config::splice(argv, &cmd_path, flags);
    let m = root.try_get_matches_from(&argv).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&m).unwrap_or_else(|e| e.exit());
    Ok((cli, m))
}

fn main_inner() -> Result<bool, CliError> {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let (cli, m) = parse(&argv)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut outcome = run::run(&cli.command, cli.seed)?;
    outcome.output.set_meta(config::resolved(&Cli::command(), &m));
    let bytes = outcome.output.render(cli.format == Format::Json)?;
    match &cli.out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(!outcome.failed)
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("esmlab: invariant violated");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("esmlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
