mod args;
mod commands;
mod output;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;
use shs_core::solve::SolveError;
use shs_core::threat::ThreatError;

use args::{Cli, Command};
use pipeline::UsageError;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BACKEND: u8 = 3;

fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global()?;
    }
    match &cli.command {
        Command::Generate(a) => commands::generate(cli, a),
        Command::Train(a) => commands::train(cli, a),
        Command::Atlas(a) => commands::atlas(cli, a),
        Command::Attack(a) => commands::attack(cli, a),
        Command::Matrix(a) => commands::matrix(cli, a),
        Command::Resiliency(a) => commands::resiliency_cmd(cli, a),
        Command::Report(a) => commands::report(cli, a),
    }
}

fn is_backend_failure(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let solve = c.downcast_ref::<SolveError>().or(match c.downcast_ref::<ThreatError>() {
            Some(ThreatError::Solve(s)) => Some(s),
            _ => None,
        });
        matches!(solve, Some(SolveError::BackendUnavailable(_) | SolveError::Io(_)))
            || matches!(c.downcast_ref::<ThreatError>(), Some(ThreatError::IncompleteBackend(_)))
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<UsageError>())
        || matches!(
            e.downcast_ref::<ThreatError>(),
            Some(ThreatError::EmptyLadder | ThreatError::UnsortedLadder)
        )
    {
        EXIT_USAGE
    } else if is_backend_failure(e) {
        EXIT_BACKEND
    } else {
        EXIT_FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
