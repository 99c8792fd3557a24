//! The `multiscale` command line.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use thiserror::Error;

pub use args::{Cli, Command};

/// Bad or missing arguments discovered after parsing; exits with status 1.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn init_threads(threads: usize) -> anyhow::Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.command {
        Command::Simulate(a) => a.resolve()?,
        Command::Train(a) => a.resolve()?,
        Command::Evaluate(a) => a.resolve()?,
        Command::Embed(a) => a.resolve()?,
        Command::Serve(a) => a.resolve()?,
        Command::Play(a) => return commands::play(&a.url, a.export),
    };
    cfg.model.validate().map_err(|e| UsageError(e.to_string()))?;
    cfg.train.validate().map_err(|e| UsageError(e.to_string()))?;
    init_threads(cfg.threads)?;
    match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Evaluate(_) => commands::evaluate(&cfg),
        Command::Embed(_) => commands::embed(&cfg),
        Command::Serve(_) => commands::serve(&cfg),
        Command::Play(_) => unreachable!("handled above"),
    }
}

/// 0 on success, 1 for usage errors, 2 for anything that failed at run time.
pub fn exit_code(result: &anyhow::Result<()>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => 1,
        Err(_) => 2,
    }
}
