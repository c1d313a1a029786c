//! Meta-features of a clustering task and their polynomial expansion.

use serde::{Deserialize, Serialize};

use crate::accelerator::KmeansConfig;
use crate::balltree::{BallTree, NodeCounts};
use crate::spatial::Dataset;

/// Names of the per-iteration base features, in expansion order.
pub const BASE_FEATURES: [&str; 8] = [
    "n",
    "k",
    "d",
    "f",
    "iteration_index",
    "tree_depth",
    "leaf_count",
    "avg_points_per_leaf",
];

/// Position of `iteration_index` in [`BASE_FEATURES`].
pub const ITERATION_SLOT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub f: usize,
    pub tree_depth: usize,
    pub leaf_count: usize,
    pub internal_count: usize,
    pub avg_points_per_leaf: f64,
    /// 1-based; 0 for task-level rows.
    pub iteration_index: usize,
}

impl MetaFeatures {
    pub fn from_counts(n: usize, k: usize, d: usize, f: usize, counts: NodeCounts) -> Self {
        Self {
            n,
            k,
            d,
            f,
            tree_depth: counts.depth,
            leaf_count: counts.leaves,
            internal_count: counts.internals,
            avg_points_per_leaf: n as f64 / counts.leaves as f64,
            iteration_index: 0,
        }
    }

    pub fn at_iteration(mut self, iteration: usize) -> Self {
        self.iteration_index = iteration;
        self
    }

    pub fn base(&self) -> [f64; 8] {
        [
            self.n as f64,
            self.k as f64,
            self.d as f64,
            self.f as f64,
            self.iteration_index as f64,
            self.tree_depth as f64,
            self.leaf_count as f64,
            self.avg_points_per_leaf,
        ]
    }
}

/// Reads the task's meta-features off a point tree built with `cfg.f`.
pub fn extract_meta_features(data: &Dataset, cfg: &KmeansConfig, tree: &BallTree) -> MetaFeatures {
    debug_assert_eq!(tree.capacity(), cfg.f);
    MetaFeatures::from_counts(data.n(), cfg.k, data.d(), cfg.f, tree.node_counts())
}

/// Column means and scales learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation per column; constant columns
    /// get scale 1 so they map to zero.
    pub fn fit<'a, I>(rows: I, width: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut means = vec![0.0; width];
        let mut count = 0usize;
        for row in rows.clone() {
            means.iter_mut().zip(row).for_each(|(m, x)| *m += x);
            count += 1;
        }
        let denom = count.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= denom);
        let mut scales = vec![0.0; width];
        for row in rows {
            scales.iter_mut().zip(row).zip(&means).for_each(|((s, x), m)| *s += (x - m) * (x - m));
        }
        for s in &mut scales {
            *s = (*s / denom).sqrt();
            if !(*s > 0.0) || !s.is_finite() {
                *s = 1.0;
            }
        }
        Self { means, scales }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

/// Every monomial of total degree `<= beta` in `m` variables, each written
/// as a non-decreasing list of variable indices. Ordered by degree, then
/// lexicographically; the first term is the empty product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    terms: Vec<Vec<usize>>,
}

impl Expansion {
    pub fn new(m: usize, beta: usize) -> Self {
        let mut terms = vec![Vec::new()];
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..beta {
            let mut next = Vec::new();
            for term in &frontier {
                let from = term.last().copied().unwrap_or(0);
                for v in from..m {
                    let mut t = term.clone();
                    t.push(v);
                    next.push(t);
                }
            }
            terms.extend(next.iter().cloned());
            frontier = next;
        }
        Self { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.iter().map(|&v| x[v]).product())
            .collect()
    }
}

/// Degree-`beta` expansion of one standardized row.
pub fn expand_features(row: &[f64], beta: usize) -> Vec<f64> {
    Expansion::new(row.len(), beta).expand(row)
}

/// `C(m + beta, beta)`.
pub fn expansion_dimension(m: usize, beta: usize) -> usize {
    (1..=beta).fold(1usize, |acc, i| acc * (m + i) / i)
}
