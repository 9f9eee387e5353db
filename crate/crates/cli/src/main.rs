//! `aw4re`: scene generation, capture, counterfactual queries, evaluation,
//! retrieval comparison and environment rollouts.

mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aw4re", version, about = "Counterfactual camera-query engine")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Environment config (JSON). Defaults apply to omitted fields.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    pub retrieval: Option<RetrievalArg>,
    /// External completion executable, called as `<plugin> <request> <response>`.
    #[arg(long, global = true, value_name = "PATH")]
    pub plugin: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Reject plugin outputs that alter supported pixels.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Real,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RetrievalArg {
    #[value(name = "4d")]
    FourD,
    TimeLocal,
}

/// Where a query's action sequence comes from.
#[derive(Args, Debug, Clone)]
pub struct ActionsArgs {
    /// Built-in generator: orbit, static, zoom, corner, hold, rewind.
    #[arg(long, conflicts_with = "actions")]
    pub trajectory: Option<String>,
    /// JSON file holding a list of camera actions.
    #[arg(long, value_name = "PATH")]
    pub actions: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthetic scene operations.
    Scene {
        #[command(subcommand)]
        command: SceneCommand,
    },
    /// Real-mode rollout of one action sequence into a corpus.
    Capture {
        #[command(flatten)]
        actions: ActionsArgs,
        /// Scene file; generated from the seed when omitted.
        #[arg(long, value_name = "PATH")]
        scene: Option<PathBuf>,
        /// Time steps to keep, e.g. `1-20,55-121`. All when omitted.
        #[arg(long)]
        observe: Option<String>,
        /// Add an iteration to the corpus already in the output directory.
        #[arg(long)]
        append: bool,
    },
    /// Counterfactual query against a corpus.
    Query {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[command(flatten)]
        actions: ActionsArgs,
    },
    /// Scores a query output, against the scene oracle when given.
    Eval {
        #[arg(long, value_name = "DIR")]
        query: PathBuf,
        #[arg(long, value_name = "PATH")]
        scene: Option<PathBuf>,
    },
    /// Runs the same query under 4d and time-local retrieval.
    Compare {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[command(flatten)]
        actions: ActionsArgs,
        #[arg(long, value_name = "PATH")]
        scene: Option<PathBuf>,
    },
    /// Environment rollouts.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
    /// Dumps the relevance scores and selection for one query time step.
    Explain {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[command(flatten)]
        actions: ActionsArgs,
        #[arg(long)]
        t: u32,
    },
}

#[derive(Subcommand, Debug)]
pub enum SceneCommand {
    /// Writes `scene.json` for the seed.
    Gen,
}

#[derive(Subcommand, Debug)]
pub enum EnvCommand {
    Run {
        #[arg(long, value_enum, default_value_t = PolicyArg::Random)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[command(flatten)]
        actions: ActionsArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Scripted,
    Random,
}

fn configure_threads() {
    if let Some(n) = std::env::var("AW4RE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("AW4RE_THREADS ignored: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<commands::UsageError>().is_some();
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
