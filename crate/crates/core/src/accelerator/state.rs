use serde::{Deserialize, Serialize};

use crate::spatial::{dist, Dataset};

/// Label of a point that has not been assigned yet.
pub const UNASSIGNED: usize = usize::MAX;

/// Centroids plus the per-cluster bookkeeping carried between iterations.
///
/// Vectors are stored row-major (`k` rows of `d` coordinates).
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub k: usize,
    pub d: usize,
    pub centroids: Vec<f64>,
    pub sum_vectors: Vec<f64>,
    pub counts: Vec<usize>,
    pub assignments: Vec<usize>,
    pub inter_bounds: Vec<f64>,
    pub drifts: Vec<f64>,
    /// 1-based index of the iteration in progress.
    pub iteration: usize,
}

impl ClusterState {
    pub fn new(centroids: Vec<f64>, d: usize, n: usize) -> Self {
        let k = centroids.len() / d;
        Self {
            k,
            d,
            sum_vectors: vec![0.0; k * d],
            counts: vec![0; k],
            assignments: vec![UNASSIGNED; n],
            inter_bounds: vec![f64::INFINITY; k],
            drifts: vec![0.0; k],
            iteration: 1,
            centroids,
        }
    }

    #[inline]
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn sum_vector(&self, j: usize) -> &[f64] {
        &self.sum_vectors[j * self.d..(j + 1) * self.d]
    }

    pub fn max_drift(&self) -> f64 {
        self.drifts.iter().copied().fold(0.0, f64::max)
    }

    /// Moves `weight` points whose coordinate sum is `sum` from cluster
    /// `from` (or from nowhere) into cluster `to`.
    pub(crate) fn move_mass(&mut self, from: usize, to: usize, sum: &[f64], weight: usize) {
        let d = self.d;
        if from != UNASSIGNED {
            self.counts[from] -= weight;
            let sv = &mut self.sum_vectors[from * d..(from + 1) * d];
            if self.counts[from] == 0 {
                sv.fill(0.0);
            } else {
                sv.iter_mut().zip(sum).for_each(|(s, x)| *s -= x);
            }
        }
        self.counts[to] += weight;
        self.sum_vectors[to * d..(to + 1) * d]
            .iter_mut()
            .zip(sum)
            .for_each(|(s, x)| *s += x);
    }

    /// Relabels one point, keeping sums and counts in step.
    #[inline]
    pub(crate) fn move_point(&mut self, i: usize, to: usize, p: &[f64]) {
        let from = self.assignments[i];
        if from != to {
            self.move_mass(from, to, p, 1);
            self.assignments[i] = to;
        }
    }

    /// Replaces sums and counts with values recomputed from the assignments.
    pub fn recompute_sums(&mut self, data: &Dataset) {
        self.sum_vectors.fill(0.0);
        self.counts.fill(0);
        let d = self.d;
        for (i, &a) in self.assignments.iter().enumerate() {
            if a == UNASSIGNED {
                continue;
            }
            self.counts[a] += 1;
            self.sum_vectors[a * d..(a + 1) * d]
                .iter_mut()
                .zip(data.point(i))
                .for_each(|(s, x)| *s += x);
        }
    }

    /// `c_j ← sv(j)/|S_j|` and `Δ[j] = ‖c_j − c'_j‖`; empty clusters keep
    /// their centroid and report zero drift.
    pub fn refine(&mut self) {
        let d = self.d;
        let mut next = vec![0.0; d];
        for j in 0..self.k {
            if self.counts[j] == 0 {
                self.drifts[j] = 0.0;
                continue;
            }
            let count = self.counts[j] as f64;
            for (c, s) in next.iter_mut().zip(self.sum_vector(j)) {
                *c = s / count;
            }
            self.drifts[j] = dist(self.centroid(j), &next);
            self.centroids[j * d..(j + 1) * d].copy_from_slice(&next);
        }
    }

    /// Sum of squared distances from each point to its assigned centroid.
    pub fn sse(&self, data: &Dataset) -> f64 {
        sse(data, &self.centroids, &self.assignments)
    }
}

/// Clustering objective for a labelling; unassigned points are skipped.
pub fn sse(data: &Dataset, centroids: &[f64], assignments: &[usize]) -> f64 {
    let d = data.d();
    data.iter()
        .zip(assignments)
        .filter(|(_, &a)| a != UNASSIGNED)
        .map(|(p, &a)| crate::spatial::sq_dist(p, &centroids[a * d..(a + 1) * d]))
        .sum()
}

/// Distance-evaluation and pruning counters for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    /// Point-to-centroid, pivot-to-centroid and centroid-to-centroid
    /// distance evaluations.
    pub distance_computations: u64,
    /// Points labelled through a whole-node decision.
    pub batch_assigned_points: u64,
    /// Successful inter-bound tests, point or node level.
    pub interbound_hits: u64,
    /// Centroid-tree nodes skipped during nearest-centroid searches.
    pub knn_node_prunes: u64,
}
