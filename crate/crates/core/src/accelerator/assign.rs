//! Inter bounds and the recursive batch assignment over the point tree.

use crate::balltree::{BallTree, NodeId};
use crate::spatial::{dist, Dataset};

use super::knn::{knn_linear, knn_search, KnnResult, SENTINEL};
use super::state::{ClusterState, PruneStats, UNASSIGNED};

/// Which pruning devices an assignment pass may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pruning {
    /// Keep a point or node in its previous cluster when it lies well inside
    /// half the inter bound.
    pub inter_bound: bool,
    /// Search nearest centroids through the centroid tree instead of a scan.
    pub centroid_tree: bool,
}

impl Pruning {
    pub const FULL: Pruning = Pruning { inter_bound: true, centroid_tree: true };
}

/// Nearest-centroid search through the tree when one is supplied, otherwise
/// by linear scan. A search that finds nothing below `ub` is repeated
/// unbounded, so the first slot is always a real centroid.
fn nearest(
    kk: usize,
    q: &[f64],
    ctree: Option<&BallTree>,
    state: &ClusterState,
    ub: f64,
    stats: &mut PruneStats,
) -> KnnResult {
    match ctree {
        Some(tree) => {
            let r = knn_search(kk, q, tree, &state.centroids, tree.root(), ub, stats);
            if r.ids[0] == SENTINEL && ub.is_finite() {
                knn_search(kk, q, tree, &state.centroids, tree.root(), f64::INFINITY, stats)
            } else {
                r
            }
        }
        None => knn_linear(kk, q, &state.centroids, state.d, f64::INFINITY, stats),
    }
}

/// Sets `cb[j]` to the distance from centroid `j` to its nearest other
/// centroid. From the second iteration on, the tree search is seeded with
/// `cb[j] + Δ[j] + max Δ`, which bounds the new value from above.
pub fn compute_inter_bounds(state: &mut ClusterState, ctree: Option<&BallTree>, stats: &mut PruneStats) {
    if state.k < 2 {
        state.inter_bounds.fill(f64::INFINITY);
        return;
    }
    let max_drift = state.max_drift();
    let mut bounds = Vec::with_capacity(state.k);
    for j in 0..state.k {
        let ub = if state.iteration <= 1 {
            f64::INFINITY
        } else {
            state.inter_bounds[j] + state.drifts[j] + max_drift
        };
        let q = state.centroid(j);
        let r = match ctree {
            Some(tree) => knn_search(2, q, tree, &state.centroids, tree.root(), ub, stats),
            None => knn_linear(2, q, &state.centroids, state.d, f64::INFINITY, stats),
        };
        bounds.push(r.dists[1]);
    }
    state.inter_bounds = bounds;
}

/// Per-node memory of whole-node decisions: `(cluster, iteration)` of the
/// last time the node was labelled as a unit. This is the `a(N)` of the
/// pruning tests.
#[derive(Debug, Clone)]
pub struct NodeLabels(Vec<Option<(usize, usize)>>);

impl NodeLabels {
    pub fn new(tree: &BallTree) -> Self {
        Self(vec![None; tree.len()])
    }

    pub fn get(&self, id: NodeId) -> Option<(usize, usize)> {
        self.0[id]
    }
}

/// Whole-node decisions taken during one pass, for inspection in tests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignTrace {
    /// Nodes kept in their cluster by the inter-bound test.
    pub inter_bound_nodes: Vec<(NodeId, usize)>,
    /// Nodes assigned whole because the gap to the second centroid was wide.
    pub gap_nodes: Vec<(NodeId, usize)>,
}

/// One assignment pass: every point ends up labelled with its exact nearest
/// centroid (lowest id on ties) and sums and counts follow.
pub struct Assigner<'a> {
    pub data: &'a Dataset,
    pub tree: &'a BallTree,
    pub ctree: Option<&'a BallTree>,
    pub pruning: Pruning,
    pub labels: &'a mut NodeLabels,
    pub stats: &'a mut PruneStats,
    pub trace: Option<&'a mut AssignTrace>,
}

impl Assigner<'_> {
    /// Assigns everything under the root with an unbounded search radius.
    pub fn assign_all(&mut self, state: &mut ClusterState) {
        let root = self.tree.root();
        self.assign_node(state, root, f64::INFINITY, None);
    }

    /// `inherited` is the cluster that held every point of this subtree at
    /// the end of the previous iteration, if some ancestor knew it.
    pub fn assign_node(&mut self, state: &mut ClusterState, id: NodeId, ub: f64, inherited: Option<usize>) {
        let it = state.iteration;
        let tree = self.tree;
        let node = tree.node(id);
        let (radius, count) = (node.radius, node.count);
        let pivot = tree.pivot(id);
        let previous = inherited.or_else(|| match self.labels.0[id] {
            Some((c, stamp)) if stamp + 1 == it => Some(c),
            _ => None,
        });

        if self.pruning.inter_bound && it > 1 {
            if let Some(a) = previous {
                let d = dist(pivot, state.centroid(a));
                self.stats.distance_computations += 1;
                if d + radius < state.inter_bounds[a] / 2.0 {
                    self.stats.interbound_hits += 1;
                    self.stats.batch_assigned_points += count as u64;
                    self.labels.0[id] = Some((a, it));
                    if let Some(t) = self.trace.as_deref_mut() {
                        t.inter_bound_nodes.push((id, a));
                    }
                    return;
                }
            }
        }

        let r = nearest(2, pivot, self.ctree, state, ub, self.stats);
        let (n1, d1, d2) = (r.ids[0], r.dists[0], r.dists[1]);
        if d2 - d1 > 2.0 * radius {
            self.take_whole(state, id, n1, previous);
            if let Some(t) = self.trace.as_deref_mut() {
                t.gap_nodes.push((id, n1));
            }
            return;
        }

        let child_ub = d2 + radius;
        match node.children() {
            Some((l, rchild)) => {
                self.assign_node(state, l, child_ub, previous);
                self.assign_node(state, rchild, child_ub, previous);
            }
            None => {
                for &i in tree.members(id) {
                    self.assign_point(state, i, child_ub);
                }
            }
        }
    }

    pub fn assign_point(&mut self, state: &mut ClusterState, i: usize, ub: f64) {
        let data = self.data;
        let p = data.point(i);
        let a = state.assignments[i];
        if self.pruning.inter_bound && state.iteration > 1 && a != UNASSIGNED {
            let d = dist(p, state.centroid(a));
            self.stats.distance_computations += 1;
            if d < state.inter_bounds[a] / 2.0 {
                self.stats.interbound_hits += 1;
                return;
            }
        }
        let r = nearest(1, p, self.ctree, state, ub, self.stats);
        state.move_point(i, r.ids[0], p);
    }

    fn take_whole(&mut self, state: &mut ClusterState, id: NodeId, to: usize, previous: Option<usize>) {
        let (tree, data) = (self.tree, self.data);
        let node = tree.node(id);
        let members = tree.members(id);
        self.stats.batch_assigned_points += node.count as u64;
        match previous {
            Some(from) if from == to => {}
            Some(from) => {
                let d = state.d;
                let mut sum = vec![0.0; d];
                if node.is_leaf() {
                    for &i in members {
                        sum.iter_mut().zip(data.point(i)).for_each(|(s, x)| *s += x);
                    }
                } else {
                    let w = node.count as f64;
                    sum.iter_mut().zip(tree.pivot(id)).for_each(|(s, p)| *s = p * w);
                }
                state.move_mass(from, to, &sum, node.count);
                for &i in members {
                    state.assignments[i] = to;
                }
            }
            None => {
                for &i in members {
                    state.move_point(i, to, data.point(i));
                }
            }
        }
        self.labels.0[id] = Some((to, state.iteration));
    }
}
