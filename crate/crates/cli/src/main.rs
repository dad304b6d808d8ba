//! `recompose` command-line tool.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "recompose", version, about = "Skill-aware demonstration retrieval and action inference")]
pub struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: Overrides,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override individual config fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Also sets the total budget to k_sim + k_cov unless --total-demos is given.
    #[arg(long, global = true)]
    pub k_sim: Option<usize>,
    /// Also sets the total budget to k_sim + k_cov unless --total-demos is given.
    #[arg(long, global = true)]
    pub k_cov: Option<usize>,
    #[arg(long, global = true)]
    pub total_demos: Option<usize>,
    #[arg(long, global = true)]
    pub velocity_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub library: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    pub static_library: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the effective configuration.
    DumpConfig,
    /// Annotate raw episodes into a demonstration library.
    Collect(CollectArgs),
    /// Build the coverage-aware static library.
    BuildStatic(BuildStaticArgs),
    /// Print the ranked dynamic candidates for one query as TSV.
    Retrieve(RetrieveArgs),
    /// Run one query end to end and print its result as JSON.
    Infer(InferArgs),
    /// Run a query manifest and write a summary report.
    Eval(EvalArgs),
    /// Validate a demonstration library (and static library, if configured).
    Validate,
    /// Write a self-contained synthetic workspace.
    Synth(SynthArgs),
    /// Print verb and label counts of a library.
    Stats,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// Directory holding `episodes/*.json` and the images they reference.
    #[arg(long, value_name = "DIR")]
    pub raw: PathBuf,
    /// Output library directory; defaults to the configured library path.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Value stored as the library creation stamp.
    #[arg(long, default_value = "unspecified")]
    pub created: String,
}

#[derive(Debug, Args)]
pub struct BuildStaticArgs {
    /// Maximum number of selected demos.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Output file; defaults to the configured static library path.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    /// Query record (JSON, same shape as a manifest entry).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["instruction", "embedding", "image"])]
    pub query: Option<PathBuf>,
    #[arg(long, default_value = "query")]
    pub id: String,
    #[arg(long)]
    pub instruction: Option<String>,
    /// Precomputed embedding (JSON array).
    #[arg(long, value_name = "FILE", conflicts_with = "image")]
    pub embedding: Option<PathBuf>,
    /// Observation image, embedded by the configured embedder.
    #[arg(long, value_name = "FILE")]
    pub image: Option<PathBuf>,
    /// Scene object as `name=ix,iy,iz` (repeatable).
    #[arg(long = "object", value_name = "NAME=IX,IY,IZ")]
    pub objects: Vec<String>,
    /// Demos of this task are excluded from retrieval.
    #[arg(long)]
    pub task_name: Option<String>,
    #[arg(long)]
    pub gripper_closed: bool,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Skill plan such as "Reach[cup] -> Grasp[cup]"; the planner is asked when omitted.
    #[arg(long)]
    pub plan: Option<String>,
    /// Print every candidate instead of the top k_sim.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Write the exact prompt sent to the model.
    #[arg(long, value_name = "FILE")]
    pub dump_prompt: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE", required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Generate a synthetic workspace with this many queries and evaluate it.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report directory; defaults to the configured output path, then `eval-out`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub queries: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        (false, _) => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_env("RECOMPOSE_LOG").format_timestamp(None).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category.code())
        }
    }
}
