//! `fpsim` command-line front end.
//!
//! Exit codes: 0 success, 1 replay divergence, 2 invalid config or input,
//! 3 I/O failure, 4 backend unavailable, 5 replay refused.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fpsim_core::{Aggregator, Restriction};
use thiserror::Error;

pub use commands::{
    cmd_analyze, cmd_infer_personas, cmd_replay, cmd_simulate, summary_tsv, AnalyzeArgs,
    AnalyzeOutput, ReplayVerdict,
};
pub use manifest::{sha256_hex, RunManifest, MANIFEST_FILE};

pub const EXIT_DIVERGED: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Refused(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Refused(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Debug, Parser)]
#[command(name = "fpsim", version, about = "Generative agent social network simulator and friendship-paradox analyzer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute superiority and correlation reports from an event log.
    Analyze {
        /// Run directory produced by `simulate`.
        #[arg(long, required_unless_present = "events")]
        run: Option<PathBuf>,
        /// Event log outside a run directory.
        #[arg(long, conflicts_with = "run")]
        events: Option<PathBuf>,
        /// Agent count; taken from the manifest or the log when omitted.
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,3,inf")]
        k: Vec<Restriction>,
        #[arg(long, value_delimiter = ',', default_value = "mean,median")]
        agg: Vec<Aggregator>,
        /// Report directory; defaults to the run directory or the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a corpus file into a personas file.
    InferPersonas {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: BackendArg,
    },
    /// Re-run a scripted run and compare event logs byte for byte.
    Replay {
        #[arg(long)]
        run: PathBuf,
    },
}

/// Runs a parsed command, reporting to stdout/stderr. Returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Simulate { config, out } => {
            let m = cmd_simulate(&config, &out)?;
            println!(
                "halt\t{}\niterations\t{}\nagents\t{}\nconfig_sha256\t{}",
                m.halt_reason.as_str(),
                m.iterations,
                m.agent_count,
                m.config_sha256
            );
            Ok(0)
        }
        Command::Analyze {
            run,
            events,
            agents,
            k,
            agg,
            out,
        } => {
            let args = AnalyzeArgs {
                run,
                events,
                agents,
                restrictions: k,
                aggregators: agg,
                out,
            };
            let res = cmd_analyze(&args)?;
            print!("{}", summary_tsv(&res.report));
            Ok(0)
        }
        Command::InferPersonas {
            corpus,
            out,
            backend,
        } => {
            let n = cmd_infer_personas(&corpus, &out, backend)?;
            println!("personas\t{n}");
            Ok(0)
        }
        Command::Replay { run } => match cmd_replay(&run)? {
            ReplayVerdict::Match => {
                println!("replay\tmatch");
                Ok(0)
            }
            ReplayVerdict::Diverged { line, expected, found } => {
                println!("replay\tdiverged\t{line}");
                eprintln!("first difference at events.jsonl line {line}");
                eprintln!("  recorded: {}", found.as_deref().unwrap_or("<missing>"));
                eprintln!("  replayed: {}", expected.as_deref().unwrap_or("<missing>"));
                Ok(EXIT_DIVERGED)
            }
        },
    }
}
