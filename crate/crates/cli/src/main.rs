use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlt::model::Variant;

mod commands;
mod output;

/// Fit, sample, evaluate and analyse multiplex latent trade-off models.
#[derive(Debug, Parser)]
#[command(name = "mlt", version)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to an edge list (largest strongly connected component).
    Fit(FitArgs),
    /// Sample a network from a synthetic spec or a parameter file.
    Sample(SampleArgs),
    /// Cross-validated link prediction, bias versus full model.
    Eval(EvalArgs),
    /// Statistics over fitted networks.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct GraphInput {
    /// Whitespace-separated `src dst layer` edge list.
    #[arg(long)]
    edges: PathBuf,
    /// Layer count, needed when the edge list has no metadata sidecar.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, Args)]
struct RunOptions {
    /// JSON run configuration; omitted sections take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Top-level seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: GraphInput,
    #[command(flatten)]
    run: RunOptions,
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Synthetic network spec (JSON).
    #[arg(long, required_unless_present = "params", conflicts_with = "params")]
    spec: Option<PathBuf>,
    /// Parameter file written by `fit`.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    input: GraphInput,
    #[command(flatten)]
    run: RunOptions,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long = "neg-sets")]
    neg_sets: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Also write ROC and PR curve points.
    #[arg(long)]
    curves: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Edge lists, one per network, paired in order with `--params`.
    #[arg(long, required = true)]
    edges: Vec<PathBuf>,
    #[arg(long, required = true)]
    params: Vec<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Claimed descending layer order for the layer-order test, 1-based.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Sample(a) => commands::sample(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
