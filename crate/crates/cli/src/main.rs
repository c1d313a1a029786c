//! `daskmeans` command-line tool.
//!
//! Exit codes: 0 on success, 1 for unreadable input or bad usage, 2 for
//! configurations that cannot run (bad k, infeasible memory budget, model
//! version mismatch), 3 when a run violates an internal invariant.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use daskmeans::accelerator::InitMethod;
use daskmeans::Variant;

#[derive(Parser)]
#[command(name = "daskmeans", version, about = "Ball-tree accelerated k-means with memory and runtime estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a point file; writes centroids, assignments and run stats.
    Cluster(ClusterArgs),
    /// Reduce a point cloud to k representative points.
    Simplify(SimplifyArgs),
    /// Print the index memory model for (n, k, f), or the tuned f for a budget.
    Estimate(EstimateArgs),
    /// Print the leaf capacity that fits a memory budget.
    Tune(TuneArgs),
    /// Fit a runtime model to recorded task samples (NDJSON).
    Train(TrainArgs),
    /// Predict per-iteration and total runtime of a clustering task.
    Predict(PredictArgs),
    /// Record a task sample set, train and score estimators, compare variants.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    RandomSample,
    Kmeanspp,
}

impl From<Init> for InitMethod {
    fn from(i: Init) -> Self {
        match i {
            Init::RandomSample => InitMethod::RandomSample,
            Init::Kmeanspp => InitMethod::Kmeanspp,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Point file, CSV or whitespace-separated .xyz.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, short)]
    k: usize,
    /// Leaf capacity of the ball trees (default 30).
    #[arg(long, short, conflicts_with = "memory_budget")]
    f: Option<usize>,
    /// Memory budget in 8-byte units; the leaf capacity is tuned to fit.
    #[arg(long)]
    memory_budget: Option<f64>,
    /// Maximum number of iterations.
    #[arg(long, short, default_value_t = 20)]
    q: usize,
    /// Stop once no centroid moves further than this ("inf" stops after one pass).
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "daskmeans")]
    variant: Variant,
    #[arg(long, value_enum, default_value_t = Init::RandomSample)]
    init: Init,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "centroids.csv")]
    centroids: PathBuf,
    #[arg(long, default_value = "assignments.txt")]
    assignments: PathBuf,
    #[arg(long, default_value = "stats.json")]
    stats: PathBuf,
}

#[derive(Args)]
struct SimplifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output point file, written in the input's format.
    #[arg(long, short)]
    output: PathBuf,
    /// Keep k uniformly sampled input points instead of centroids.
    #[arg(long)]
    random: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, short)]
    n: u64,
    #[arg(long, short)]
    k: u64,
    #[arg(long, short, default_value_t = 30)]
    f: u64,
    /// Memory budget in 8-byte units; also prints the tuned capacity.
    #[arg(long)]
    budget: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, short)]
    n: u64,
    #[arg(long, short)]
    k: u64,
    #[arg(long)]
    budget: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Recorded task samples, one JSON object per line.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 4)]
    beta: usize,
    /// Iteration cap of the model (default: largest cap among the samples).
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Task meta-features as a JSON file, instead of a point file.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    features: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, short, required_unless_present = "features")]
    k: Option<usize>,
    #[arg(long, short, default_value_t = 30)]
    f: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "daskmeans")]
    variant: Variant,
    /// Run the task and re-estimate the remaining time after each iteration.
    #[arg(long, requires = "input")]
    live: bool,
    #[arg(long, default_value_t = 50.0)]
    sigma: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Number of tasks to generate and record.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    n_min: usize,
    #[arg(long, default_value_t = 1_000_000)]
    n_max: usize,
    #[arg(long, default_value_t = 100)]
    k_min: usize,
    #[arg(long, default_value_t = 1_000)]
    k_max: usize,
    #[arg(long, default_value_t = 10)]
    f_min: usize,
    #[arg(long, default_value_t = 200)]
    f_max: usize,
    #[arg(long, short, default_value_t = 20)]
    q: usize,
    /// Polynomial degrees of the runtime models to compare.
    #[arg(long, value_delimiter = ',', default_value = "1,4")]
    betas: Vec<usize>,
    #[arg(long, default_value_t = 50.0)]
    sigma: f64,
    /// Variants run side by side on the first test tasks.
    #[arg(long, value_delimiter = ',', default_value = "lloyd,daskmeans")]
    variants: Vec<String>,
    /// How many test tasks go into the variant table.
    #[arg(long, default_value_t = 3)]
    variant_tasks: usize,
    /// Record tasks on all cores (timings interfere).
    #[arg(long)]
    parallel: bool,
    /// Also write the recorded samples as NDJSON.
    #[arg(long)]
    samples_out: Option<PathBuf>,
    /// Report path prefix; writes PREFIX.json and PREFIX.csv.
    #[arg(long, default_value = "report")]
    report: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Cluster(a) => commands::cluster(&a),
        Command::Simplify(a) => commands::simplify(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
