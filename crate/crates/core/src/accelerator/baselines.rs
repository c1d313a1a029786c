//! Reference algorithms: the exhaustive scan and a single-bound variant.

use crate::spatial::{dist, sq_dist, Dataset};

use super::state::{ClusterState, PruneStats};

/// Exhaustive assignment: every point against every centroid, lowest id on
/// ties. Sums and counts are rebuilt from scratch.
pub fn lloyd_assign(data: &Dataset, state: &mut ClusterState, stats: &mut PruneStats) {
    let k = state.k;
    for (i, p) in data.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for j in 0..k {
            let dd = sq_dist(p, state.centroid(j));
            if dd < best.0 {
                best = (dd, j);
            }
        }
        state.assignments[i] = best.1;
    }
    stats.distance_computations += (data.n() * k) as u64;
    state.recompute_sums(data);
}

/// Per-point bounds of the single-bound scheme: an upper bound on the
/// distance to the assigned centroid and a lower bound on the distance to
/// every other centroid.
#[derive(Debug, Clone)]
pub struct HamerlyBounds {
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl HamerlyBounds {
    pub fn new(n: usize) -> Self {
        Self {
            upper: vec![f64::INFINITY; n],
            lower: vec![0.0; n],
        }
    }

    /// Loosens the bounds by the drifts of the last refinement.
    pub fn apply_drifts(&mut self, state: &ClusterState) {
        let max_drift = state.max_drift();
        for ((u, l), &a) in self.upper.iter_mut().zip(&mut self.lower).zip(&state.assignments) {
            *u += state.drifts[a];
            *l -= max_drift;
        }
    }
}

/// Brute-force inter bounds `cb[j] = min_{j'≠j} ‖c_j − c_j'‖`.
pub fn pairwise_inter_bounds(state: &mut ClusterState, stats: &mut PruneStats) {
    let k = state.k;
    let mut cb = vec![f64::INFINITY; k];
    for a in 0..k {
        for b in a + 1..k {
            let d = dist(state.centroid(a), state.centroid(b));
            cb[a] = cb[a].min(d);
            cb[b] = cb[b].min(d);
        }
    }
    stats.distance_computations += (k * k.saturating_sub(1) / 2) as u64;
    state.inter_bounds = cb;
}

pub fn hamerly_assign(data: &Dataset, state: &mut ClusterState, bounds: &mut HamerlyBounds, stats: &mut PruneStats) {
    let first = state.iteration <= 1;
    for (i, p) in data.iter().enumerate() {
        if !first {
            let a = state.assignments[i];
            let limit = (state.inter_bounds[a] / 2.0).max(bounds.lower[i]);
            if bounds.upper[i] < limit {
                stats.interbound_hits += 1;
                continue;
            }
            bounds.upper[i] = dist(p, state.centroid(a));
            stats.distance_computations += 1;
            if bounds.upper[i] < limit {
                stats.interbound_hits += 1;
                continue;
            }
        }
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for j in 0..state.k {
            let d = dist(p, state.centroid(j));
            if d < best.0 {
                second = best.0;
                best = (d, j);
            } else if d < second {
                second = d;
            }
        }
        stats.distance_computations += state.k as u64;
        bounds.upper[i] = best.0;
        bounds.lower[i] = second;
        state.move_point(i, best.1, p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accelerator::{init_centroids_flat, InitMethod};
    use crate::spatial::generate_synthetic;

    #[test]
    fn scan_breaks_ties_toward_lower_id() {
        let data = Dataset::from_flat(vec![5.0, 0.0, 1.0, 0.0, 9.0, 0.0], 2).unwrap();
        let mut state = ClusterState::new(vec![0.0, 0.0, 10.0, 0.0], 2, 3);
        let mut stats = PruneStats::default();
        lloyd_assign(&data, &mut state, &mut stats);
        assert_eq!(state.assignments, [0, 0, 1]);
        assert_eq!(state.counts, [2, 1]);
        assert_eq!(state.sum_vectors, [6.0, 0.0, 9.0, 0.0]);
        assert_eq!(stats.distance_computations, 6);
    }

    #[test]
    fn single_bound_scheme_follows_the_scan() {
        let data = generate_synthetic(4_000, 2, 10, 4, 0.04).unwrap();
        let init = init_centroids_flat(&data, 12, 9, InitMethod::RandomSample).unwrap();
        let mut ours = ClusterState::new(init.clone(), 2, data.n());
        let mut reference = ClusterState::new(init, 2, data.n());
        let mut bounds = HamerlyBounds::new(data.n());
        let mut stats = PruneStats::default();
        for it in 1..=10 {
            ours.iteration = it;
            if it > 1 {
                bounds.apply_drifts(&ours);
            }
            pairwise_inter_bounds(&mut ours, &mut stats);
            hamerly_assign(&data, &mut ours, &mut bounds, &mut stats);
            lloyd_assign(&data, &mut reference, &mut PruneStats::default());
            assert_eq!(ours.assignments, reference.assignments, "iteration {it}");
            ours.refine();
            reference.refine();
        }
        assert!(stats.interbound_hits > 0);
    }
}
