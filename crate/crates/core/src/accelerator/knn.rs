//! Bounded one- and two-nearest-centroid search.

use crate::balltree::{BallTree, NodeId};
use crate::spatial::dist;

use super::state::PruneStats;

/// Id carried by a result slot that no centroid filled.
pub const SENTINEL: usize = usize::MAX;

/// The `kk` nearest centroids found, ascending by `(distance, id)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnResult {
    pub ids: [usize; 2],
    pub dists: [f64; 2],
    pub kk: usize,
}

impl KnnResult {
    fn empty(kk: usize, ub: f64) -> Self {
        debug_assert!(kk == 1 || kk == 2);
        Self { ids: [SENTINEL; 2], dists: [ub; 2], kk }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids[..self.kk]
    }

    pub fn dists(&self) -> &[f64] {
        &self.dists[..self.kk]
    }

    #[inline]
    fn worst(&self) -> (f64, usize) {
        (self.dists[self.kk - 1], self.ids[self.kk - 1])
    }

    #[inline]
    fn offer(&mut self, d: f64, id: usize) {
        let better = |a: (f64, usize), b: (f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
        if !better((d, id), self.worst()) {
            return;
        }
        if self.kk == 2 && better((d, id), (self.dists[0], self.ids[0])) {
            self.dists[1] = self.dists[0];
            self.ids[1] = self.ids[0];
            self.dists[0] = d;
            self.ids[0] = id;
        } else {
            self.dists[self.kk - 1] = d;
            self.ids[self.kk - 1] = id;
        }
    }
}

/// Finds the `kk ∈ {1, 2}` nearest centroids to `q` among those strictly
/// closer than `ub`, descending the centroid tree from `node`.
///
/// Ties are broken by the lower centroid id. Slots left unfilled carry
/// [`SENTINEL`] at distance `ub`. A child sphere is skipped when
/// `‖q − p*‖ − r` exceeds the current `kk`-th best distance.
pub fn knn_search(
    kk: usize,
    q: &[f64],
    tree: &BallTree,
    centroids: &[f64],
    node: NodeId,
    ub: f64,
    stats: &mut PruneStats,
) -> KnnResult {
    assert!(kk == 1 || kk == 2, "knn_search supports one or two neighbours");
    let mut result = KnnResult::empty(kk, ub);
    let mut search = Search { tree, centroids, q, ub, stats, result: &mut result };
    search.visit(node);
    result
}

struct Search<'a> {
    tree: &'a BallTree,
    centroids: &'a [f64],
    q: &'a [f64],
    ub: f64,
    stats: &'a mut PruneStats,
    result: &'a mut KnnResult,
}

impl Search<'_> {
    fn visit(&mut self, id: NodeId) {
        let tree = self.tree;
        let d = tree.dim();
        match tree.node(id).children() {
            None => {
                for &c in tree.members(id) {
                    let dc = dist(self.q, &self.centroids[c * d..(c + 1) * d]);
                    self.stats.distance_computations += 1;
                    if dc < self.ub {
                        self.result.offer(dc, c);
                    }
                }
            }
            Some((l, r)) => {
                let lb_l = dist(self.q, tree.pivot(l)) - tree.node(l).radius;
                let lb_r = dist(self.q, tree.pivot(r)) - tree.node(r).radius;
                self.stats.distance_computations += 2;
                let order = if lb_r < lb_l { [(r, lb_r), (l, lb_l)] } else { [(l, lb_l), (r, lb_r)] };
                for (child, lb) in order {
                    // equality still descends: an equal-distance centroid
                    // with a lower id must be able to win the tie
                    if lb <= self.result.worst().0 {
                        self.visit(child);
                    } else {
                        self.stats.knn_node_prunes += 1;
                    }
                }
            }
        }
    }
}

/// Reference scan over every centroid, same contract as [`knn_search`].
pub fn knn_linear(kk: usize, q: &[f64], centroids: &[f64], d: usize, ub: f64, stats: &mut PruneStats) -> KnnResult {
    assert!(kk == 1 || kk == 2, "knn_linear supports one or two neighbours");
    let mut result = KnnResult::empty(kk, ub);
    for (c, centroid) in centroids.chunks_exact(d).enumerate() {
        let dc = dist(q, centroid);
        if dc < ub {
            result.offer(dc, c);
        }
    }
    stats.distance_computations += (centroids.len() / d) as u64;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn search(kk: usize, q: &[f64], centroids: &[f64], d: usize, f: usize, ub: f64) -> KnnResult {
        let tree = BallTree::build(centroids, d, f).unwrap();
        knn_search(kk, q, &tree, centroids, tree.root(), ub, &mut PruneStats::default())
    }

    // independent oracle: sort all (distance, id) pairs below ub
    fn brute(kk: usize, q: &[f64], centroids: &[f64], d: usize, ub: f64) -> (Vec<usize>, Vec<f64>) {
        let mut all: Vec<(f64, usize)> = centroids
            .chunks_exact(d)
            .enumerate()
            .map(|(i, c)| (q.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .filter(|(dd, _)| *dd < ub)
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut ids: Vec<usize> = all.iter().take(kk).map(|x| x.1).collect();
        let mut dists: Vec<f64> = all.iter().take(kk).map(|x| x.0).collect();
        while ids.len() < kk {
            ids.push(SENTINEL);
            dists.push(ub);
        }
        (ids, dists)
    }

    #[test]
    fn query_on_a_centroid() {
        let r = search(1, &[5.0, 5.0], &[5.0, 5.0], 2, 2, f64::INFINITY);
        assert_eq!(r.ids(), &[0]);
        assert_eq!(r.dists(), &[0.0]);
    }

    #[test]
    fn two_nearest_of_three() {
        let cents = [0.0, 0.0, 10.0, 0.0, 0.0, 10.0];
        let r = search(2, &[1.0, 0.0], &cents, 2, 2, f64::INFINITY);
        assert_eq!(r.ids(), &[0, 1]);
        assert_eq!(r.dists(), &[1.0, 9.0]);

        let r = search(2, &[1.0, 0.0], &cents, 2, 2, 0.5);
        assert_eq!(r.ids(), &[SENTINEL, SENTINEL]);
        assert_eq!(r.dists(), &[0.5, 0.5]);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let cents = [1.0, -1.0, 1.0, -1.0];
        let r = search(2, &[0.0], &cents, 1, 2, f64::INFINITY);
        assert_eq!(r.ids(), &[0, 1]);
        let r = search(1, &[0.0], &cents, 1, 2, f64::INFINITY);
        assert_eq!(r.ids(), &[0]);
    }

    #[test]
    fn matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let d = 1 + trial % 3;
            let k = rng.gen_range(1..60);
            let f = rng.gen_range(2..12);
            let cents: Vec<f64> = (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let ub = if rng.gen_bool(0.3) { f64::INFINITY } else { rng.gen_range(0.01..1.5) };
            let kk = 1 + trial % 2;
            let r = search(kk, &q, &cents, d, f, ub);
            let (ids, dists) = brute(kk, &q, &cents, d, ub);
            assert_eq!(r.ids(), &ids[..], "trial {trial}");
            assert_eq!(r.dists(), &dists[..], "trial {trial}");
            let lin = knn_linear(kk, &q, &cents, d, ub, &mut PruneStats::default());
            assert_eq!(lin, r);
        }
    }

    #[test]
    fn pruning_saves_work_on_clustered_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cents: Vec<f64> = (0..400 * 2).map(|_| rng.gen_range(0.0..1.0)).collect();
        let tree = BallTree::build(&cents, 2, 8).unwrap();
        let mut stats = PruneStats::default();
        knn_search(2, &[0.5, 0.5], &tree, &cents, tree.root(), f64::INFINITY, &mut stats);
        assert!(stats.knn_node_prunes > 0);
        assert!(stats.distance_computations < 400);
    }
}
