use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emsr_core::cli::{exit_code, run, Command, RunConfig};

/// Super-resolution of sparse emission rasters.
#[derive(Parser)]
#[command(name = "emsr", version)]
struct Args {
    /// Configuration file with `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a setting, e.g. `-s seed=3`. Repeatable.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate a synthetic emission corpus.
    Synth,
    /// Slice, filter, pair and split a corpus.
    Prepare,
    /// Fit the quantile transform on training HR data.
    FitTransform,
    /// Train a network.
    Train,
    /// Score a checkpoint against held-out pairs.
    Evaluate,
    /// Upscale a single LR grid.
    SuperResolve,
    /// Merge result tables.
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Synth => Command::Synth,
            Cmd::Prepare => Command::Prepare,
            Cmd::FitTransform => Command::FitTransform,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::SuperResolve => Command::SuperResolve,
            Cmd::Report => Command::Report,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = (|| {
        let mut cfg = match &args.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for s in &args.set {
            cfg.set_pair(s)?;
        }
        run(args.command.into(), &cfg)
    })();
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("emsr: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
