use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use daskmeans::accelerator::{init_centroids_flat, run_observed, IterationReport, KmeansError};
use daskmeans::balltree::TreeError;
use daskmeans::estimator::gp::GpAdjuster;
use daskmeans::estimator::memory::{estimate_total_memory, tune_leaf_capacity};
use daskmeans::estimator::{EstimatorError, MetaFeatures, RuntimeModel};
use daskmeans::harness::{self, HarnessError, SampleSetConfig};
use daskmeans::spatial::{load_dataset, serialize_points, DataError, Dataset, PointFormat};
use daskmeans::{BallTree, KmeansConfig, RunOutput, Variant};
use serde::Serialize;

use crate::{BenchArgs, ClusterArgs, EstimateArgs, PredictArgs, RunArgs, SimplifyArgs, TrainArgs, TuneArgs};

pub const STATS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, or a bad flag combination.
    Input(String),
    /// Well-formed input describing a task that cannot run.
    Infeasible(String),
    /// The library produced a result that breaks its own contract.
    Invariant(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Infeasible(m) | CliError::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<KmeansError> for CliError {
    fn from(e: KmeansError) -> Self {
        match e {
            KmeansError::Tree(TreeError::Empty) => CliError::Input(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Json(_) => CliError::Input(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Kmeans(e) => e.into(),
            HarnessError::Data(e) => e.into(),
            HarnessError::Estimator(e) => e.into(),
            HarnessError::Json { .. } | HarnessError::Io(_) => CliError::Input(e.to_string()),
            HarnessError::NoTestData | HarnessError::NotRecorded(_) => CliError::Infeasible(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_points(path: &Path) -> Result<(Dataset, PointFormat)> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let format = PointFormat::from_path(path);
    let data = load_dataset(BufReader::new(file), format).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((data, format))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn config_for(run: &RunArgs, n: usize) -> Result<KmeansConfig> {
    let f = match run.memory_budget {
        Some(budget) => tune_leaf_capacity(n as u64, run.k as u64, budget)? as usize,
        None => run.f.unwrap_or(30),
    };
    Ok(KmeansConfig {
        k: run.k,
        f,
        max_iterations: run.q,
        tolerance: run.tolerance,
        seed: run.seed,
        init: run.init.into(),
        variant: run.variant,
    })
}

/// Runs the clustering, turning panics and contract violations into exit 3.
fn run_checked<F>(data: &Dataset, cfg: &KmeansConfig, observer: F) -> Result<RunOutput>
where
    F: FnMut(&IterationReport<'_>),
{
    let out = catch_unwind(AssertUnwindSafe(|| run_observed(data, cfg, observer)))
        .map_err(|_| CliError::Invariant("clustering run panicked".into()))??;
    if out.assignments.len() != data.n() || out.assignments.iter().any(|&a| a >= cfg.k) {
        return Err(CliError::Invariant("assignment outside 0..k".into()));
    }
    if out.centroids.len() != cfg.k * data.d() || out.centroids.iter().any(|c| !c.is_finite()) {
        return Err(CliError::Invariant("centroids are missing or not finite".into()));
    }
    if out.iterations_used == 0 || out.iterations_used > cfg.max_iterations {
        return Err(CliError::Invariant(format!("{} iterations recorded", out.iterations_used)));
    }
    Ok(out)
}

#[derive(Serialize)]
struct Stats<'a> {
    schema_version: u32,
    variant: &'a str,
    n: usize,
    d: usize,
    k: usize,
    f_used: usize,
    seed: u64,
    iterations_used: usize,
    converged: bool,
    per_iteration_runtimes_ms: &'a [f64],
    distance_computations: u64,
    batch_assigned_points: u64,
    interbound_hits: u64,
    knn_node_prunes: u64,
    structural_memory_units: u64,
    sse: &'a [f64],
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    let (data, _) = read_points(&args.run.input)?;
    let cfg = config_for(&args.run, data.n())?;
    let mut sse = Vec::new();
    let out = run_checked(&data, &cfg, |rep| sse.push(rep.state.sse(&data)))?;

    let centroids = serialize_points(out.centroids.chunks_exact(out.d), PointFormat::Csv);
    write_file(&args.centroids, &centroids)?;
    let assignments: String = out.assignments.iter().map(|a| format!("{a}\n")).collect();
    write_file(&args.assignments, &assignments)?;
    let stats = Stats {
        schema_version: STATS_SCHEMA_VERSION,
        variant: cfg.variant.name(),
        n: data.n(),
        d: data.d(),
        k: cfg.k,
        f_used: cfg.f,
        seed: cfg.seed,
        iterations_used: out.iterations_used,
        converged: out.converged,
        per_iteration_runtimes_ms: &out.per_iteration_runtimes_ms,
        distance_computations: out.stats.distance_computations,
        batch_assigned_points: out.stats.batch_assigned_points,
        interbound_hits: out.stats.interbound_hits,
        knn_node_prunes: out.stats.knn_node_prunes,
        structural_memory_units: out.structural_memory_units(),
        sse: &sse,
    };
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    write_file(&args.stats, &(json + "\n"))?;
    println!(
        "{} iterations ({}), {:.3} ms, {} distance computations",
        out.iterations_used,
        if out.converged { "converged" } else { "iteration cap" },
        out.total_runtime_ms(),
        out.stats.distance_computations
    );
    Ok(())
}

pub fn simplify(args: &SimplifyArgs) -> Result<()> {
    let (data, format) = read_points(&args.run.input)?;
    let points = if args.random {
        init_centroids_flat(&data, args.run.k, args.run.seed, daskmeans::accelerator::InitMethod::RandomSample)?
    } else {
        let cfg = config_for(&args.run, data.n())?;
        run_checked(&data, &cfg, |_| {})?.centroids
    };
    write_file(&args.output, &serialize_points(points.chunks_exact(data.d()), format))?;
    println!("{} -> {} points", data.n(), points.len() / data.d());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let est = estimate_total_memory(args.n, args.k, args.f)?;
    let mut doc = serde_json::json!({
        "n": args.n,
        "k": args.k,
        "f": args.f,
        "estimate": est,
    });
    if let Some(budget) = args.budget {
        let f = tune_leaf_capacity(args.n, args.k, budget)?;
        doc["budget"] = budget.into();
        doc["tuned_f"] = f.into();
        doc["tuned_estimate"] = serde_json::to_value(estimate_total_memory(args.n, args.k, f)?).expect("serializable");
    }
    println!("{}", to_json(&doc));
    Ok(())
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let f = tune_leaf_capacity(args.n, args.k, args.budget)?;
    let est = estimate_total_memory(args.n, args.k, f)?;
    println!(
        "{}",
        to_json(&serde_json::json!({
            "n": args.n,
            "k": args.k,
            "budget": args.budget,
            "f": f,
            "total_units": est.total_units,
        }))
    );
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<harness::TaskSample>> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(harness::read_samples(BufReader::new(file))?)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let samples = read_samples(&args.samples)?;
    if samples.is_empty() {
        return Err(CliError::Infeasible("sample file is empty".into()));
    }
    let q = args
        .q
        .unwrap_or_else(|| samples.iter().map(|s| s.cfg.max_iterations).max().unwrap_or(1));
    let trained = harness::train(&format!("beta{}", args.beta), &samples, args.beta, q)?;
    write_file(&args.output, &(trained.model.to_json() + "\n"))?;
    println!(
        "trained beta={} q={} on {} samples in {:.3} ms",
        args.beta,
        q,
        samples.len(),
        trained.training_ms
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<RuntimeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(RuntimeModel::from_json(&text)?)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = match &args.input {
        Some(path) => Some(read_points(path)?.0),
        None => None,
    };
    let features = match (&args.features, &data) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<MetaFeatures>(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        (None, Some(data)) => {
            let k = args.k.ok_or_else(|| CliError::Input("--k is required with --input".into()))?;
            let tree = BallTree::from_dataset(data, args.f).map_err(KmeansError::from)?;
            MetaFeatures::from_counts(data.n(), k, data.d(), args.f, tree.node_counts())
        }
        (None, None) => return Err(CliError::Input("either --features or --input is required".into())),
    };
    let pred = model.predict_runtime(&features)?;
    println!("predicted_iterations {}", pred.iterations);
    for (j, (y, u)) in pred.per_iteration_ms.iter().zip(&pred.mask).enumerate() {
        println!("iteration {} u {} predicted_ms {}", j + 1, u, y);
    }
    println!("total_ms {}", pred.total_ms);

    if !args.live {
        return Ok(());
    }
    let data = data.expect("--live requires --input");
    let cfg = KmeansConfig {
        k: features.k,
        f: args.f,
        max_iterations: model.q,
        seed: args.seed,
        variant: args.variant,
        ..KmeansConfig::default()
    };
    let mut gp = GpAdjuster::new(args.sigma);
    let mut seen = 0.0;
    let mut failure = None;
    let horizon = pred.iterations;
    run_checked(&data, &cfg, |rep| {
        let j = rep.iteration;
        let y_hat = pred.per_iteration_ms[j - 1];
        seen += rep.runtime_ms;
        if y_hat > 0.0 && failure.is_none() {
            if let Err(e) = gp.observe(j as f64, y_hat, rep.runtime_ms) {
                failure = Some(e);
            }
        }
        let upcoming = (j + 1..=horizon.max(j)).map(|l| (l, pred.per_iteration_ms[l - 1]));
        let (plain, adjusted) = upcoming.fold((0.0, 0.0), |(p, a), (l, y)| (p + y, a + gp.adjust(l as f64, y)));
        println!(
            "live iteration {j} observed_ms {} remaining_ms {} adjusted_total_ms {} unadjusted_total_ms {}",
            rep.runtime_ms,
            adjusted,
            seen + adjusted,
            seen + plain
        );
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let variants = args
        .variants
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Variant>().map_err(CliError::Input))
        .collect::<Result<Vec<_>>>()?;
    if variants.is_empty() {
        return Err(CliError::Input("--variants needs at least one variant".into()));
    }
    if args.betas.is_empty() {
        return Err(CliError::Input("--betas needs at least one degree".into()));
    }
    let cfg = SampleSetConfig {
        count: args.count,
        n_range: (args.n_min, args.n_max),
        k_range: (args.k_min, args.k_max),
        f_range: (args.f_min, args.f_max),
        max_iterations: args.q,
        ..SampleSetConfig::default()
    };
    let samples = harness::record_all(&harness::generate_sample_set(&cfg, args.seed)?, args.parallel)?;
    if let Some(path) = &args.samples_out {
        let file = File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        harness::write_samples(&mut out, &samples)?;
        out.flush()?;
    }
    let parts = harness::split(&samples);
    let models = args
        .betas
        .iter()
        .map(|&b| harness::train(&format!("beta{b}"), parts.train, b, args.q))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut report = harness::evaluate(&models, parts.test, args.sigma)?;
    let table_tasks = &parts.test[..args.variant_tasks.min(parts.test.len())];
    report.variants = harness::compare_variants(table_tasks, &variants, args.parallel)?;

    let prefix = args.report.display().to_string();
    write_file(Path::new(&format!("{prefix}.json")), &(report.to_json() + "\n"))?;
    write_file(Path::new(&format!("{prefix}.csv")), &report.to_csv())?;

    println!("{:<10} {:>14} {:>12} {:>8} {:>8}", "model", "mse", "mae", "wmape", "smape");
    for m in &report.models {
        println!(
            "{:<10} {:>14.4} {:>12.4} {:>8.4} {:>8.2}",
            m.name, m.metrics.mse, m.metrics.mae, m.metrics.wmape, m.metrics.smape
        );
    }
    for a in &report.adjustment {
        println!("{:<10} gp_mae {:.4} nogp_mae {:.4} over {} prefixes", a.name, a.gp_mae, a.nogp_mae, a.prefixes);
    }
    for v in &report.variants {
        println!(
            "task {:>4} {:<10} {:>10.3} ms {:>12} distances {:>3} iterations",
            v.task,
            v.variant.name(),
            v.total_runtime_ms,
            v.distance_computations,
            v.iterations_used
        );
    }
    Ok(())
}
