//! Command-line pipeline: gen, extract, label, train, eval, classify, export.
//!
//! Exit codes: 0 on success, 2 when some inputs were skipped or quarantined,
//! 1 on any fatal error.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use agilecc_core::Execution;
use anyhow::Result;
use clap::{Parser, Subcommand};

pub use commands::{ForestOverrides, Globals, SchemaChoice, Status};
pub use config::Config;
pub use report::{ClassificationReport, ClassificationRow, Summary};

#[derive(Debug, Parser)]
#[command(name = "agilecc", version, about = "Classify functions as easy or hard to optimize")]
pub struct Cli {
    /// Seed for generation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with optional [gen], [labeler] and [forest] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (directory for `gen`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Abort on the first parse diagnostic.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Worker threads; 0 picks automatically, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic training corpus.
    Gen {
        /// Number of functions; overrides the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Extract feature vectors into a manifest.
    Extract {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[command(flatten)]
        schema: SchemaChoice,
    },
    /// Time each function at both optimization levels and label it.
    Label {
        manifest: PathBuf,
        /// CSV of `function,t_basic,t_aggr` used instead of a compiler.
        #[arg(long, value_name = "TABLE")]
        fake_timer: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        /// Keep generated drivers in this directory.
        #[arg(long, value_name = "DIR")]
        keep_drivers: Option<PathBuf>,
    },
    /// Train a forest on the labeled rows of a manifest.
    Train {
        manifest: PathBuf,
        #[command(flatten)]
        forest: ForestOverrides,
    },
    /// Score a model, or cross-validate.
    Eval {
        manifest: PathBuf,
        #[arg(long, conflicts_with = "cv")]
        model: Option<PathBuf>,
        /// Number of folds.
        #[arg(long)]
        cv: Option<usize>,
        #[command(flatten)]
        forest: ForestOverrides,
    },
    /// Label the functions in source files with a trained model.
    Classify {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Emit the model as C decision code.
    Export {
        #[arg(long)]
        model: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<Status> {
    let g = Globals {
        seed: cli.seed,
        config: Config::load(cli.config.as_deref())?,
        out: cli.out,
        strict: cli.strict,
        exec: Execution::from_jobs(cli.jobs),
    };
    match &cli.command {
        Command::Gen { n } => commands::gen(&g, *n),
        Command::Extract { sources, schema } => commands::extract(&g, sources, schema),
        Command::Label {
            manifest,
            fake_timer,
            delta,
            keep_drivers,
        } => commands::label(&g, manifest, fake_timer.as_deref(), *delta, keep_drivers.clone()),
        Command::Train { manifest, forest } => commands::train(&g, manifest, forest),
        Command::Eval {
            manifest,
            model,
            cv,
            forest,
        } => commands::eval(&g, manifest, model.as_deref(), *cv, forest),
        Command::Classify { sources, model } => commands::classify(&g, sources, model),
        Command::Export { model } => commands::export(&g, model),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
