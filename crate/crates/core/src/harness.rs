//! Task sampling, runtime recording and estimator evaluation.
//!
//! A sample set is a list of seeded clustering tasks. Recording a task runs
//! it once and keeps its per-iteration wall times, pruning counters and
//! index sizes, so estimators can be trained and scored later without
//! re-running anything. Task lists can be executed on a rayon pool when the
//! `parallel` feature is on; each task is still a single-threaded run.

use std::io::{BufRead, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accelerator::{run_observed, KmeansConfig, KmeansError, PruneStats, Variant};
use crate::balltree::BallTree;
use crate::estimator::gp::{adjust_predictions, GpAdjuster};
use crate::estimator::metrics::Metrics;
use crate::estimator::regression::{fit_runtime_model, RuntimeModel, TrainingSample};
use crate::estimator::{EstimatorError, MetaFeatures};
use crate::spatial::{generate_synthetic, load_dataset, DataError, Dataset, PointFormat};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no test samples to evaluate")]
    NoTestData,
    #[error("sample {0} has not been recorded")]
    NotRecorded(usize),
    #[error(transparent)]
    Kmeans(#[from] KmeansError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Where a task's points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        n: usize,
        d: usize,
        k_true: usize,
        seed: u64,
        spread: f64,
    },
    File {
        path: String,
    },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset, DataError> {
        match self {
            Self::Synthetic { n, d, k_true, seed, spread } => generate_synthetic(*n, *d, *k_true, *seed, *spread),
            Self::File { path } => {
                let path = std::path::Path::new(path);
                let file = std::fs::File::open(path).map_err(|e| DataError::Io(e.to_string()))?;
                load_dataset(std::io::BufReader::new(file), PointFormat::from_path(path))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recorded {
    pub per_iteration_runtimes_ms: Vec<f64>,
    pub iterations_used: usize,
    pub features: MetaFeatures,
    pub stats: PruneStats,
    /// Objective after each refinement.
    pub sse: Vec<f64>,
    pub point_index_units: u64,
    pub centroid_index_units: u64,
    pub structural_memory_units: u64,
}

impl Recorded {
    pub fn total_runtime_ms(&self) -> f64 {
        self.per_iteration_runtimes_ms.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub id: usize,
    pub dataset: DatasetSpec,
    pub cfg: KmeansConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded: Option<Recorded>,
}

impl TaskSample {
    pub fn recorded(&self) -> Result<&Recorded, HarnessError> {
        self.recorded.as_ref().ok_or(HarnessError::NotRecorded(self.id))
    }

    pub fn training_sample(&self) -> Result<TrainingSample, HarnessError> {
        let r = self.recorded()?;
        Ok(TrainingSample {
            features: r.features,
            runtimes_ms: r.per_iteration_runtimes_ms.clone(),
            iterations_used: r.iterations_used,
        })
    }
}

/// Ranges the task generator draws from. `n` and `k` are log-uniform,
/// everything else uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetConfig {
    pub count: usize,
    pub n_range: (usize, usize),
    pub k_range: (usize, usize),
    pub d_choices: Vec<usize>,
    pub f_range: (usize, usize),
    pub spread_range: (f64, f64),
    pub max_iterations: usize,
    pub variant: Variant,
}

impl Default for SampleSetConfig {
    fn default() -> Self {
        Self {
            count: 200,
            n_range: (10_000, 1_000_000),
            k_range: (100, 1_000),
            d_choices: vec![2, 3],
            f_range: (10, 200),
            spread_range: (0.005, 0.05),
            max_iterations: 20,
            variant: Variant::Daskmeans,
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    if lo >= hi {
        return lo;
    }
    let x = rng.gen_range((lo as f64).ln()..=(hi as f64).ln()).exp().round() as usize;
    x.clamp(lo, hi)
}

pub fn generate_sample_set(cfg: &SampleSetConfig, seed: u64) -> Result<Vec<TaskSample>, HarnessError> {
    let bad = |m: &str| HarnessError::Data(DataError::InvalidParameter(m.into()));
    if cfg.n_range.0 == 0 || cfg.n_range.0 > cfg.n_range.1 {
        return Err(bad("n range is empty"));
    }
    if cfg.k_range.0 == 0 || cfg.k_range.0 > cfg.k_range.1 {
        return Err(bad("k range is empty"));
    }
    if cfg.d_choices.is_empty() || cfg.d_choices.contains(&0) {
        return Err(bad("d choices must be positive and nonempty"));
    }
    if cfg.f_range.0 < 2 || cfg.f_range.0 > cfg.f_range.1 {
        return Err(bad("f range must lie in [2, inf)"));
    }
    if !(cfg.spread_range.0 >= 0.0 && cfg.spread_range.0 <= cfg.spread_range.1) {
        return Err(bad("spread range is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..cfg.count)
        .map(|id| {
            let n = log_uniform(&mut rng, cfg.n_range.0, cfg.n_range.1);
            let k = log_uniform(&mut rng, cfg.k_range.0, cfg.k_range.1).min(n);
            let d = cfg.d_choices[rng.gen_range(0..cfg.d_choices.len())];
            let f = rng.gen_range(cfg.f_range.0..=cfg.f_range.1);
            let k_true = rng.gen_range(k.div_ceil(2)..=2 * k).min(n);
            let spread = rng.gen_range(cfg.spread_range.0..=cfg.spread_range.1);
            TaskSample {
                id,
                dataset: DatasetSpec::Synthetic {
                    n,
                    d,
                    k_true,
                    seed: rng.gen(),
                    spread,
                },
                cfg: KmeansConfig {
                    k,
                    f,
                    max_iterations: cfg.max_iterations,
                    seed: rng.gen(),
                    variant: cfg.variant,
                    ..KmeansConfig::default()
                },
                recorded: None,
            }
        })
        .collect();
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split<'a, T> {
    pub train: &'a [T],
    pub validation: &'a [T],
    pub test: &'a [T],
}

/// 80/10/10 in order; generated tasks are already i.i.d.
pub fn split<T>(items: &[T]) -> Split<'_, T> {
    let n = items.len();
    let train = n * 8 / 10;
    let validation = n / 10;
    Split {
        train: &items[..train],
        validation: &items[train..train + validation],
        test: &items[train + validation..],
    }
}

/// Runs the task once and fills in its recorded fields.
pub fn run_and_record(sample: &TaskSample) -> Result<TaskSample, HarnessError> {
    let data = sample.dataset.load()?;
    let mut sse = Vec::new();
    let out = run_observed(&data, &sample.cfg, |rep| sse.push(rep.state.sse(&data)))?;
    let counts = match out.point_tree {
        Some(c) => c,
        None => BallTree::from_dataset(&data, sample.cfg.f).map_err(KmeansError::from)?.node_counts(),
    };
    let features = MetaFeatures::from_counts(data.n(), sample.cfg.k, data.d(), sample.cfg.f, counts);
    let recorded = Recorded {
        iterations_used: out.iterations_used,
        features,
        stats: out.stats,
        sse,
        point_index_units: out.point_index_units,
        centroid_index_units: out.centroid_index_units,
        structural_memory_units: out.structural_memory_units(),
        per_iteration_runtimes_ms: out.per_iteration_runtimes_ms,
    };
    Ok(TaskSample {
        recorded: Some(recorded),
        ..sample.clone()
    })
}

/// Maps `f` over `items`, on the rayon pool when `parallel` is set and the
/// feature is compiled in.
pub fn map_tasks<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Records every sample. Serial by default so wall times do not interfere.
pub fn record_all(samples: &[TaskSample], parallel: bool) -> Result<Vec<TaskSample>, HarnessError> {
    map_tasks(samples, parallel, run_and_record).into_iter().collect()
}

pub fn write_samples<W: Write>(mut out: W, samples: &[TaskSample]) -> Result<(), HarnessError> {
    for s in samples {
        serde_json::to_writer(&mut out, s).map_err(|e| HarnessError::Json {
            line: s.id + 1,
            message: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<TaskSample>, HarnessError> {
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line).map_err(|e| HarnessError::Json {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(samples)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub name: String,
    pub model: RuntimeModel,
    pub training_ms: f64,
}

pub fn train(name: &str, samples: &[TaskSample], beta: usize, q: usize) -> Result<TrainedModel, HarnessError> {
    let rows = samples.iter().map(TaskSample::training_sample).collect::<Result<Vec<_>, _>>()?;
    let start = Instant::now();
    let model = fit_runtime_model(&rows, beta, q)?;
    Ok(TrainedModel {
        name: name.to_string(),
        model,
        training_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub beta: usize,
    /// Scores of predicted against measured total runtime per task.
    pub metrics: Metrics,
    pub training_ms: f64,
    pub prediction_ms: f64,
}

/// Online correction scored over every revealed prefix `1..iterations_used`
/// of every test task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentReport {
    pub name: String,
    pub sigma: f64,
    pub prefixes: usize,
    pub gp_mae: f64,
    pub nogp_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub task: usize,
    pub variant: Variant,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub iterations_used: usize,
    pub total_runtime_ms: f64,
    pub distance_computations: u64,
    pub batch_assigned_points: u64,
    pub interbound_hits: u64,
    pub knn_node_prunes: u64,
    pub sse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub test_tasks: usize,
    pub models: Vec<ModelReport>,
    pub adjustment: Vec<AdjustmentReport>,
    pub variants: Vec<VariantRow>,
}

/// Totals that would be reported after `observed` iterations, without and
/// with online correction. Both count the observed time exactly and add
/// predictions for iterations `observed+1..=υ̂`.
pub fn prefix_totals(
    model: &RuntimeModel,
    features: &MetaFeatures,
    observed: &[f64],
    adjuster: &GpAdjuster,
) -> Result<(f64, f64), HarnessError> {
    let pred = model.predict_runtime(features)?;
    let i = observed.len();
    let seen: f64 = observed.iter().sum();
    let horizon = pred.iterations.max(i).min(pred.per_iteration_ms.len());
    let ahead = &pred.per_iteration_ms[..horizon];
    let nogp = seen + ahead.iter().skip(i).sum::<f64>();
    // a zero prediction in the prefix leaves no ratio to learn from
    if i == 0 || i > horizon || ahead[..i].iter().any(|&y| y <= 0.0) {
        return Ok((nogp, nogp));
    }
    let gp = adjust_predictions(adjuster, ahead, observed)?.total_ms;
    Ok((nogp, gp))
}

pub fn evaluate(models: &[TrainedModel], test: &[TaskSample], sigma: f64) -> Result<EvalReport, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::NoTestData);
    }
    let recorded = test.iter().map(TaskSample::recorded).collect::<Result<Vec<_>, _>>()?;
    let actual: Vec<f64> = recorded.iter().map(|r| r.total_runtime_ms()).collect();
    let adjuster = GpAdjuster::new(sigma);
    let mut model_reports = Vec::new();
    let mut adjustment = Vec::new();
    for tm in models {
        let start = Instant::now();
        let predicted = recorded
            .iter()
            .map(|r| tm.model.predict_runtime(&r.features).map(|p| p.total_ms))
            .collect::<Result<Vec<_>, _>>()?;
        let prediction_ms = start.elapsed().as_secs_f64() * 1e3;
        model_reports.push(ModelReport {
            name: tm.name.clone(),
            beta: tm.model.beta,
            metrics: Metrics::compute(&actual, &predicted),
            training_ms: tm.training_ms,
            prediction_ms,
        });

        let (mut gp_err, mut nogp_err, mut prefixes) = (0.0, 0.0, 0usize);
        for (r, &y_total) in recorded.iter().zip(&actual) {
            let runtimes = &r.per_iteration_runtimes_ms;
            for i in 1..runtimes.len().min(tm.model.q) {
                let (nogp, gp) = prefix_totals(&tm.model, &r.features, &runtimes[..i], &adjuster)?;
                nogp_err += (nogp - y_total).abs();
                gp_err += (gp - y_total).abs();
                prefixes += 1;
            }
        }
        let denom = prefixes.max(1) as f64;
        adjustment.push(AdjustmentReport {
            name: tm.name.clone(),
            sigma,
            prefixes,
            gp_mae: gp_err / denom,
            nogp_mae: nogp_err / denom,
        });
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        test_tasks: test.len(),
        models: model_reports,
        adjustment,
        variants: Vec::new(),
    })
}

/// Runs each task under every listed variant with identical seeds.
pub fn compare_variants(tasks: &[TaskSample], variants: &[Variant], parallel: bool) -> Result<Vec<VariantRow>, HarnessError> {
    let jobs: Vec<TaskSample> = tasks
        .iter()
        .flat_map(|t| {
            variants.iter().map(move |&variant| TaskSample {
                cfg: KmeansConfig { variant, ..t.cfg.clone() },
                recorded: None,
                ..t.clone()
            })
        })
        .collect();
    let recorded = map_tasks(&jobs, parallel, run_and_record);
    recorded
        .into_iter()
        .map(|res| {
            let s = res?;
            let r = s.recorded()?;
            Ok(VariantRow {
                task: s.id,
                variant: s.cfg.variant,
                n: r.features.n,
                k: r.features.k,
                d: r.features.d,
                iterations_used: r.iterations_used,
                total_runtime_ms: r.total_runtime_ms(),
                distance_computations: r.stats.distance_computations,
                batch_assigned_points: r.stats.batch_assigned_points,
                interbound_hits: r.stats.interbound_hits,
                knn_node_prunes: r.stats.knn_node_prunes,
                sse: r.sse.clone(),
            })
        })
        .collect()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long format, one value per line: `section,name,task,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,task,metric,value\n");
        let mut row = |section: &str, name: &str, task: &str, metric: &str, value: f64| {
            out.push_str(&format!("{section},{name},{task},{metric},{value}\n"));
        };
        for m in &self.models {
            row("model", &m.name, "", "mse", m.metrics.mse);
            row("model", &m.name, "", "mae", m.metrics.mae);
            row("model", &m.name, "", "wmape", m.metrics.wmape);
            row("model", &m.name, "", "smape", m.metrics.smape);
            row("model", &m.name, "", "training_ms", m.training_ms);
            row("model", &m.name, "", "prediction_ms", m.prediction_ms);
        }
        for a in &self.adjustment {
            row("adjustment", &a.name, "", "gp_mae", a.gp_mae);
            row("adjustment", &a.name, "", "nogp_mae", a.nogp_mae);
        }
        for v in &self.variants {
            let task = v.task.to_string();
            let name = v.variant.name();
            row("variant", name, &task, "total_runtime_ms", v.total_runtime_ms);
            row("variant", name, &task, "iterations_used", v.iterations_used as f64);
            row("variant", name, &task, "distance_computations", v.distance_computations as f64);
            row("variant", name, &task, "batch_assigned_points", v.batch_assigned_points as f64);
            row("variant", name, &task, "interbound_hits", v.interbound_hits as f64);
            row("variant", name, &task, "knn_node_prunes", v.knn_node_prunes as f64);
            if let Some(last) = v.sse.last() {
                row("variant", name, &task, "final_sse", *last);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SampleSetConfig {
        SampleSetConfig {
            count: 10,
            n_range: (200, 2_000),
            k_range: (2, 20),
            f_range: (4, 40),
            max_iterations: 6,
            ..SampleSetConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_respects_k() {
        let a = generate_sample_set(&small(), 5).unwrap();
        let b = generate_sample_set(&small(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_sample_set(&small(), 6).unwrap());
        let wide = SampleSetConfig {
            count: 300,
            n_range: (5, 50),
            k_range: (2, 100),
            ..small()
        };
        for s in generate_sample_set(&wide, 1).unwrap() {
            let DatasetSpec::Synthetic { n, k_true, .. } = s.dataset else { unreachable!() };
            assert!(s.cfg.k <= n && k_true <= n);
        }
    }

    #[test]
    fn split_sizes() {
        let items: Vec<usize> = (0..2000).collect();
        let s = split(&items);
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1600, 200, 200));
        let s = split(&items[..7]);
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 7);
    }

    #[test]
    fn empty_ranges_are_rejected() {
        let cfg = SampleSetConfig { n_range: (10, 5), ..small() };
        assert!(generate_sample_set(&cfg, 0).is_err());
    }

    #[test]
    fn recording_is_consistent() {
        let mut samples = generate_sample_set(&small(), 3).unwrap();
        samples[0].cfg.max_iterations = 1;
        let recorded = record_all(&samples, false).unwrap();
        assert_eq!(recorded[0].recorded().unwrap().per_iteration_runtimes_ms.len(), 1);
        for s in &recorded {
            let r = s.recorded().unwrap();
            assert!(r.iterations_used <= s.cfg.max_iterations);
            assert_eq!(r.per_iteration_runtimes_ms.len(), r.iterations_used);
            assert_eq!(r.sse.len(), r.iterations_used);
            let data = s.dataset.load().unwrap();
            let tree = BallTree::from_dataset(&data, s.cfg.f).unwrap();
            assert_eq!(r.point_index_units, tree.structural_float_count());
            assert_eq!(r.structural_memory_units, r.point_index_units + r.centroid_index_units + data.n() as u64);
        }
    }

    #[test]
    fn parallel_and_serial_agree_on_everything_but_time() {
        let samples = generate_sample_set(&small(), 4).unwrap();
        let strip = |v: Vec<TaskSample>| -> Vec<_> {
            v.into_iter()
                .map(|mut s| {
                    let r = s.recorded.as_mut().unwrap();
                    r.per_iteration_runtimes_ms.clear();
                    s
                })
                .collect()
        };
        let a = strip(record_all(&samples, false).unwrap());
        let b = strip(record_all(&samples, true).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn ndjson_round_trip() {
        let samples = record_all(&generate_sample_set(&small(), 9).unwrap()[..3], false).unwrap();
        let mut buf = Vec::new();
        write_samples(&mut buf, &samples).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 3);
        assert_eq!(read_samples(buf.as_slice()).unwrap(), samples);
        assert!(matches!(read_samples(&b"{oops\n"[..]), Err(HarnessError::Json { line: 1, .. })));
    }

    #[test]
    fn evaluate_needs_test_data() {
        assert!(matches!(evaluate(&[], &[], 50.0), Err(HarnessError::NoTestData)));
    }

    #[test]
    fn variant_rows_share_sse_trajectories() {
        let tasks = generate_sample_set(&small(), 2).unwrap();
        let rows = compare_variants(&tasks[..3], &[Variant::Lloyd, Variant::Daskmeans], false).unwrap();
        assert_eq!(rows.len(), 6);
        for pair in rows.chunks(2) {
            assert_eq!(pair[0].task, pair[1].task);
            assert_eq!(pair[0].iterations_used, pair[1].iterations_used);
            for (a, b) in pair[0].sse.iter().zip(&pair[1].sse) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn report_serializes_both_ways() {
        let samples = record_all(&generate_sample_set(&SampleSetConfig { count: 40, ..small() }, 11).unwrap(), false).unwrap();
        let parts = split(&samples);
        let model = train("linear", parts.train, 1, 6).unwrap();
        let mut report = evaluate(&[model], parts.test, 50.0).unwrap();
        report.variants = compare_variants(&parts.test[..1], &[Variant::Lloyd], false).unwrap();
        let m = &report.models[0].metrics;
        assert!(m.mse >= 0.0 && m.mae >= 0.0 && m.wmape >= 0.0 && (0.0..=200.0).contains(&m.smape));
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
        let csv = report.to_csv();
        for metric in ["mse", "mae", "wmape", "smape", "gp_mae", "nogp_mae", "final_sse"] {
            assert!(csv.contains(&format!(",{metric},")), "{metric}");
        }
    }
}
