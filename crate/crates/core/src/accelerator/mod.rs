//! The clustering engine and its baselines.
//!
//! Every variant follows the same outer loop: (re)build the centroid index,
//! compute inter bounds, assign every point to its nearest centroid, refine
//! centroids from the per-cluster sum vectors. They differ only in how the
//! assignment step avoids distance evaluations, and all of them produce the
//! exhaustive scan's labels (lowest centroid id on ties).

mod assign;
mod baselines;
mod init;
mod knn;
mod state;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balltree::{BallTree, NodeCounts, TreeError};
use crate::spatial::Dataset;

pub use assign::{compute_inter_bounds, AssignTrace, Assigner, NodeLabels, Pruning};
pub use baselines::{hamerly_assign, lloyd_assign, pairwise_inter_bounds, HamerlyBounds};
pub use init::{init_centroids, init_centroids_flat, InitMethod};
pub use knn::{knn_linear, knn_search, KnnResult, SENTINEL};
pub use state::{sse, ClusterState, PruneStats, UNASSIGNED};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KmeansError {
    #[error("k = {k} must satisfy 1 <= k <= n = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Point and centroid trees with inter-bound and kNN pruning.
    #[default]
    Daskmeans,
    /// Inter-bound pruning over the point tree, linear centroid scans.
    NoKnn,
    /// Centroid-tree kNN without the inter-bound tests.
    NoInb,
    Lloyd,
    Hamerly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Daskmeans, Variant::NoKnn, Variant::NoInb, Variant::Lloyd, Variant::Hamerly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Daskmeans => "daskmeans",
            Variant::NoKnn => "no_knn",
            Variant::NoInb => "no_inb",
            Variant::Lloyd => "lloyd",
            Variant::Hamerly => "hamerly",
        }
    }

    fn pruning(self) -> Option<Pruning> {
        match self {
            Variant::Daskmeans => Some(Pruning::FULL),
            Variant::NoKnn => Some(Pruning { inter_bound: true, centroid_tree: false }),
            Variant::NoInb => Some(Pruning { inter_bound: false, centroid_tree: true }),
            Variant::Lloyd | Variant::Hamerly => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    /// Leaf capacity of both trees.
    pub f: usize,
    /// Iteration cap `q`.
    pub max_iterations: usize,
    /// Stop once every centroid moved at most this far.
    pub tolerance: f64,
    pub seed: u64,
    pub init: InitMethod,
    pub variant: Variant,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            k: 8,
            f: 30,
            max_iterations: 20,
            tolerance: 0.0,
            seed: 0,
            init: InitMethod::RandomSample,
            variant: Variant::Daskmeans,
        }
    }
}

impl KmeansConfig {
    pub fn validate(&self, n: usize) -> Result<(), KmeansError> {
        if self.k == 0 || self.k > n {
            return Err(KmeansError::InvalidK { k: self.k, n });
        }
        if self.max_iterations == 0 {
            return Err(KmeansError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.f < 2 {
            return Err(KmeansError::Tree(TreeError::InvalidCapacity(self.f)));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(KmeansError::InvalidConfig(format!("tolerance {} must be >= 0", self.tolerance)));
        }
        Ok(())
    }
}

/// What the loop reports after each completed iteration.
pub struct IterationReport<'a> {
    pub iteration: usize,
    pub runtime_ms: f64,
    pub state: &'a ClusterState,
    pub stats: &'a PruneStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub k: usize,
    pub d: usize,
    /// Final centroids, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Wall time per iteration in milliseconds; the first entry includes
    /// initialisation and the point-tree build.
    pub per_iteration_runtimes_ms: Vec<f64>,
    pub stats: PruneStats,
    pub iterations_used: usize,
    pub converged: bool,
    /// Shape of the point tree, for variants that build one.
    pub point_tree: Option<NodeCounts>,
    pub point_index_units: u64,
    /// Structural units of the last centroid tree.
    pub centroid_index_units: u64,
}

impl RunOutput {
    pub fn total_runtime_ms(&self) -> f64 {
        self.per_iteration_runtimes_ms.iter().sum()
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.d..(j + 1) * self.d]
    }

    /// Index memory plus one assignment slot per point.
    pub fn structural_memory_units(&self) -> u64 {
        self.point_index_units + self.centroid_index_units + self.assignments.len() as u64
    }
}

pub fn run(data: &Dataset, cfg: &KmeansConfig) -> Result<RunOutput, KmeansError> {
    run_observed(data, cfg, |_| {})
}

/// Runs the configured variant, calling `observer` after every iteration.
pub fn run_observed<F>(data: &Dataset, cfg: &KmeansConfig, observer: F) -> Result<RunOutput, KmeansError>
where
    F: FnMut(&IterationReport<'_>),
{
    cfg.validate(data.n())?;
    let start = Instant::now();
    let centroids = init_centroids_flat(data, cfg.k, cfg.seed, cfg.init)?;
    let state = ClusterState::new(centroids, data.d(), data.n());
    Ok(Engine::new(data, cfg, state, start, observer)?.run())
}

/// Same loop, starting from caller-supplied centroids (row-major).
pub fn run_from<F>(data: &Dataset, cfg: &KmeansConfig, centroids: Vec<f64>, observer: F) -> Result<RunOutput, KmeansError>
where
    F: FnMut(&IterationReport<'_>),
{
    let k = centroids.len() / data.d();
    if centroids.len() % data.d() != 0 || k != cfg.k {
        return Err(KmeansError::InvalidConfig(format!(
            "expected {} centroids of dimension {}",
            cfg.k,
            data.d()
        )));
    }
    cfg.validate(data.n())?;
    let start = Instant::now();
    let state = ClusterState::new(centroids, data.d(), data.n());
    Ok(Engine::new(data, cfg, state, start, observer)?.run())
}

struct Engine<'a, F> {
    data: &'a Dataset,
    cfg: &'a KmeansConfig,
    state: ClusterState,
    stats: PruneStats,
    tree: Option<BallTree>,
    labels: Option<NodeLabels>,
    hamerly: Option<HamerlyBounds>,
    clock: Instant,
    observer: F,
}

impl<'a, F> Engine<'a, F>
where
    F: FnMut(&IterationReport<'_>),
{
    fn new(data: &'a Dataset, cfg: &'a KmeansConfig, state: ClusterState, clock: Instant, observer: F) -> Result<Self, KmeansError> {
        let tree = match cfg.variant.pruning() {
            Some(_) => Some(BallTree::from_dataset(data, cfg.f)?),
            None => None,
        };
        let labels = tree.as_ref().map(NodeLabels::new);
        let hamerly = (cfg.variant == Variant::Hamerly).then(|| HamerlyBounds::new(data.n()));
        Ok(Self {
            data,
            cfg,
            state,
            stats: PruneStats::default(),
            tree,
            labels,
            hamerly,
            clock,
            observer,
        })
    }

    fn run(mut self) -> RunOutput {
        let mut runtimes = Vec::new();
        let mut centroid_units;
        let mut converged = false;
        loop {
            centroid_units = self.step();
            self.state.refine();
            let elapsed = self.clock.elapsed().as_secs_f64() * 1e3;
            runtimes.push(elapsed);
            (self.observer)(&IterationReport {
                iteration: self.state.iteration,
                runtime_ms: elapsed,
                state: &self.state,
                stats: &self.stats,
            });
            if self.state.max_drift() <= self.cfg.tolerance {
                converged = true;
                break;
            }
            if self.state.iteration >= self.cfg.max_iterations {
                break;
            }
            self.state.iteration += 1;
            self.clock = Instant::now();
        }
        RunOutput {
            k: self.state.k,
            d: self.state.d,
            per_iteration_runtimes_ms: runtimes,
            stats: self.stats,
            iterations_used: self.state.iteration,
            converged,
            point_tree: self.tree.as_ref().map(BallTree::node_counts),
            point_index_units: self.tree.as_ref().map_or(0, BallTree::structural_float_count),
            centroid_index_units: centroid_units,
            centroids: self.state.centroids,
            assignments: self.state.assignments,
        }
    }

    /// Assignment step of one iteration; returns the centroid-tree size.
    fn step(&mut self) -> u64 {
        let data = self.data;
        match self.cfg.variant {
            Variant::Lloyd => {
                lloyd_assign(data, &mut self.state, &mut self.stats);
                0
            }
            Variant::Hamerly => {
                let bounds = self.hamerly.as_mut().expect("hamerly bounds");
                if self.state.iteration > 1 {
                    bounds.apply_drifts(&self.state);
                }
                pairwise_inter_bounds(&mut self.state, &mut self.stats);
                hamerly_assign(data, &mut self.state, bounds, &mut self.stats);
                0
            }
            variant => {
                let pruning = variant.pruning().expect("tree variant");
                let ctree = pruning
                    .centroid_tree
                    .then(|| BallTree::build(&self.state.centroids, self.state.d, self.cfg.f).expect("k >= 1 and f >= 2"));
                if pruning.inter_bound {
                    compute_inter_bounds(&mut self.state, ctree.as_ref(), &mut self.stats);
                }
                let mut assigner = Assigner {
                    data,
                    tree: self.tree.as_ref().expect("point tree"),
                    ctree: ctree.as_ref(),
                    pruning,
                    labels: self.labels.as_mut().expect("node labels"),
                    stats: &mut self.stats,
                    trace: None,
                };
                assigner.assign_all(&mut self.state);
                ctree.as_ref().map_or(0, BallTree::structural_float_count)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> Dataset {
        Dataset::from_flat(vec![0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0], 2).unwrap()
    }

    #[test]
    fn symmetric_two_blob_case() {
        for variant in Variant::ALL {
            let cfg = KmeansConfig { k: 2, f: 2, variant, ..Default::default() };
            let out = run_from(&four_points(), &cfg, vec![0.0, 0.0, 10.0, 0.0], |_| {}).unwrap();
            assert!(out.iterations_used <= 2, "{variant:?}");
            assert!(out.converged);
            assert_eq!(out.centroid(0), &[0.0, 0.5]);
            assert_eq!(out.centroid(1), &[10.0, 0.5]);
            assert_eq!(out.assignments, vec![0, 0, 1, 1]);
        }
    }

    #[test]
    fn config_validation() {
        let data = four_points();
        let bad_k = KmeansConfig { k: 5, ..Default::default() };
        assert_eq!(run(&data, &bad_k).unwrap_err(), KmeansError::InvalidK { k: 5, n: 4 });
        let bad_q = KmeansConfig { k: 2, max_iterations: 0, ..Default::default() };
        assert!(matches!(run(&data, &bad_q), Err(KmeansError::InvalidConfig(_))));
        let bad_f = KmeansConfig { k: 2, f: 1, ..Default::default() };
        assert!(matches!(run(&data, &bad_f), Err(KmeansError::Tree(TreeError::InvalidCapacity(1)))));
    }

    #[test]
    fn single_iteration_cap() {
        let data = crate::spatial::generate_synthetic(300, 2, 3, 3, 0.2).unwrap();
        let cfg = KmeansConfig { k: 3, max_iterations: 1, ..Default::default() };
        let out = run(&data, &cfg).unwrap();
        assert_eq!(out.iterations_used, 1);
        assert_eq!(out.per_iteration_runtimes_ms.len(), 1);
    }

    #[test]
    fn single_cluster_takes_everything() {
        let data = crate::spatial::generate_synthetic(50, 3, 2, 1, 0.2).unwrap();
        let cfg = KmeansConfig { k: 1, f: 4, ..Default::default() };
        let out = run(&data, &cfg).unwrap();
        assert!(out.assignments.iter().all(|&a| a == 0));
        assert_eq!(out.iterations_used, 2);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("elkan".parse::<Variant>().is_err());
    }
}
