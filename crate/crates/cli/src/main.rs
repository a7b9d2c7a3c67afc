mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{FixtureKind, QuestionArgs};
use crate::config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "kgexplain",
    version,
    about = "Explainable graph-based retrieval-augmented question answering"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract triplets from the corpus and write the graph file.
    BuildKg,
    /// Answer questions from graph paths (or lexical fallback).
    Ask(QuestionArgs),
    /// Answer, run the perturbation suite and write explanations.
    Explain(QuestionArgs),
    /// Build analysis tables from suite report files.
    Analyze {
        /// Suite report files written by `explain`.
        #[arg(required = true)]
        reports: Vec<std::path::PathBuf>,
    },
    /// Compare suite cost against the sliding-window text baseline.
    BenchCost {
        /// Questions file (JSONL).
        #[arg(long)]
        questions: std::path::PathBuf,
    },
    /// Write a fixture corpus, mock rule table and questions file.
    Fixtures {
        #[arg(long, value_enum, default_value = "worked-example")]
        kind: FixtureKind,
        /// Number of synthetic questions.
        #[arg(long, default_value_t = kgexplain::fixtures::SYNTHETIC_QUESTIONS)]
        count: usize,
    },
}

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Other = 1,
    Config = 2,
    Input = 3,
    Generator = 4,
    FallbackOnly = 5,
}

/// An error with the exit status it maps to.
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        Self {
            exit,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        use kgexplain::Error as E;
        let exit = match error.downcast_ref::<E>() {
            Some(E::GeneratorUnavailable { .. } | E::MalformedResponse(_) | E::InvalidRequest(_)) => Exit::Generator,
            Some(
                E::Io { .. }
                | E::MalformedGraphFile { .. }
                | E::MalformedRecord { .. }
                | E::Json(_)
                | E::InvalidInput(_)
                | E::InvalidPerturbation(_),
            ) => Exit::Input,
            Some(E::Template(_)) => Exit::Config,
            _ => Exit::Other,
        };
        Self { exit, error }
    }
}

impl From<kgexplain::Error> for Failure {
    fn from(e: kgexplain::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {:#}", self.exit, self.error)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

fn run(cli: Cli) -> CmdResult {
    let cfg = RunConfig::resolve(&cli.common).map_err(|e| Failure::new(Exit::Config, e))?;
    match cli.command {
        Command::BuildKg => commands::build_kg(&cfg),
        Command::Ask(q) => commands::ask(&cfg, &q),
        Command::Explain(q) => commands::explain(&cfg, &q),
        Command::Analyze { reports } => commands::analyze(&cfg, &reports),
        Command::BenchCost { questions } => commands::bench_cost(&cfg, &questions),
        Command::Fixtures { kind, count } => commands::fixtures(&cfg, kind, count),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.exit as u8)
        }
    }
}
