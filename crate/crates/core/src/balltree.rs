//! Balanced ball tree over a set of points (the dataset or the centroids).
//!
//! Nodes live in an arena. Every node covers a contiguous range of the
//! tree's permuted index array, so a leaf's point list and an internal
//! node's full membership are both plain slices.
//!
//! Construction targets `⌈2m/f⌉` leaves for `m` points: leaves are half
//! full on average, which is the occupancy the memory model assumes. Each
//! internal node splits its points along the coordinate axis of maximum
//! spread, handing the left child `⌈L/2⌉` of its `L` leaves and exactly the
//! points those leaves hold. With an even leaf budget this is the median.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{dist, Dataset};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("leaf capacity must be at least 2, got {0}")]
    InvalidCapacity(usize),
    #[error("cannot build a tree over zero points")]
    Empty,
}

pub type NodeId = usize;

const NO_CHILD: usize = usize::MAX;

/// One sphere of the tree: pivot (mean of covered points), radius (max
/// pivot-to-point distance) and covered count.
#[derive(Debug, Clone)]
pub struct BallNode {
    pub radius: f64,
    pub count: usize,
    /// Covered range in [`BallTree::indices`].
    pub start: usize,
    pub end: usize,
    left: usize,
    right: usize,
    pub depth: usize,
}

impl BallNode {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }

    #[inline]
    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        (!self.is_leaf()).then_some((self.left, self.right))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounts {
    pub leaves: usize,
    pub internals: usize,
    /// Levels on the longest root-to-leaf path; a lone root leaf has depth 1.
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct BallTree {
    nodes: Vec<BallNode>,
    pivots: Vec<f64>,
    indices: Vec<usize>,
    d: usize,
    f: usize,
    counts: NodeCounts,
}

/// Number of leaves the builder gives a node covering `m` points.
pub fn leaf_budget(m: usize, f: usize) -> usize {
    (2 * m).div_ceil(f).max(1)
}

impl BallTree {
    pub fn from_dataset(data: &Dataset, f: usize) -> Result<Self, TreeError> {
        Self::build(data.flat(), data.d(), f)
    }

    /// Builds a tree over the rows of a row-major buffer. Deterministic for a
    /// fixed input order.
    pub fn build(points: &[f64], d: usize, f: usize) -> Result<Self, TreeError> {
        if f < 2 {
            return Err(TreeError::InvalidCapacity(f));
        }
        if d == 0 || points.is_empty() {
            return Err(TreeError::Empty);
        }
        let n = points.len() / d;
        let leaves = leaf_budget(n, f);
        let mut builder = Builder {
            points,
            d,
            nodes: Vec::with_capacity(2 * leaves),
            pivots: Vec::with_capacity(2 * leaves * d),
            indices: (0..n).collect(),
            base: n / leaves,
            extra: n % leaves,
            depth: 0,
        };
        builder.build(0, n, 0, leaves, 1);
        let depth = builder.depth;
        let nodes = builder.nodes;
        let internals = nodes.iter().filter(|n| !n.is_leaf()).count();
        Ok(Self {
            counts: NodeCounts {
                leaves: nodes.len() - internals,
                internals,
                depth,
            },
            pivots: builder.pivots,
            indices: builder.indices,
            nodes,
            d,
            f,
        })
    }

    #[inline]
    pub fn root(&self) -> NodeId {
        0
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &BallNode {
        &self.nodes[id]
    }

    #[inline]
    pub fn pivot(&self, id: NodeId) -> &[f64] {
        &self.pivots[id * self.d..(id + 1) * self.d]
    }

    /// Original row indices covered by a node.
    #[inline]
    pub fn members(&self, id: NodeId) -> &[usize] {
        let node = &self.nodes[id];
        &self.indices[node.start..node.end]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn nodes(&self) -> &[BallNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.indices.len()
    }

    pub fn capacity(&self) -> usize {
        self.f
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn node_counts(&self) -> NodeCounts {
        self.counts
    }

    /// Memory units of the structure: `6 + f` per leaf (pivot, radius, count,
    /// cluster id and `f` point slots) and `8` per internal node (two child
    /// links instead of the slots).
    pub fn structural_float_count(&self) -> u64 {
        let NodeCounts { leaves, internals, .. } = self.counts;
        leaves as u64 * (6 + self.f as u64) + internals as u64 * 8
    }

    /// One line per node in preorder: `depth pivot radius count`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let pivot: Vec<String> = self.pivot(id).iter().map(|c| c.to_string()).collect();
            writeln!(out, "{} {} {} {}", node.depth, pivot.join(","), node.radius, node.count)
                .expect("writing to a String cannot fail");
            if let Some((l, r)) = node.children() {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }
}

struct Builder<'a> {
    points: &'a [f64],
    d: usize,
    nodes: Vec<BallNode>,
    pivots: Vec<f64>,
    indices: Vec<usize>,
    // global leaf sizes: leaf i holds base + (i < extra) points
    base: usize,
    extra: usize,
    depth: usize,
}

impl Builder<'_> {
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    fn points_in_leaves(&self, first_leaf: usize, leaves: usize) -> usize {
        leaves * self.base + self.extra.saturating_sub(first_leaf).min(leaves)
    }

    fn build(&mut self, start: usize, end: usize, first_leaf: usize, leaves: usize, depth: usize) -> NodeId {
        let d = self.d;
        let count = end - start;
        let mut pivot = vec![0.0; d];
        for &i in &self.indices[start..end] {
            for (acc, c) in pivot.iter_mut().zip(self.point(i)) {
                *acc += c;
            }
        }
        for c in &mut pivot {
            *c /= count as f64;
        }
        let radius = self.indices[start..end]
            .iter()
            .map(|&i| dist(&pivot, self.point(i)))
            .fold(0.0, f64::max);

        let id = self.nodes.len();
        self.nodes.push(BallNode {
            radius,
            count,
            start,
            end,
            left: NO_CHILD,
            right: NO_CHILD,
            depth,
        });
        self.pivots.extend_from_slice(&pivot);
        self.depth = self.depth.max(depth);
        if leaves <= 1 {
            return id;
        }

        let axis = self.widest_axis(start, end);
        let left_leaves = leaves.div_ceil(2);
        let left_count = self.points_in_leaves(first_leaf, left_leaves);
        let points = self.points;
        let key = |i: usize| points[i * d + axis];
        self.indices[start..end].select_nth_unstable_by(left_count, |&a, &b| {
            key(a).total_cmp(&key(b)).then(a.cmp(&b))
        });
        let mid = start + left_count;
        let left = self.build(start, mid, first_leaf, left_leaves, depth + 1);
        let right = self.build(mid, end, first_leaf + left_leaves, leaves - left_leaves, depth + 1);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..self.d {
            let (lo, hi) = self.indices[start..end]
                .iter()
                .map(|&i| self.points[i * self.d + axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        best.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::generate_synthetic;

    fn line(points: &[f64]) -> BallTree {
        BallTree::build(points, 1, 2).unwrap()
    }

    fn leaf_sets(tree: &BallTree) -> Vec<Vec<usize>> {
        let mut sets: Vec<Vec<usize>> = (0..tree.len())
            .filter(|&id| tree.node(id).is_leaf())
            .map(|id| {
                let mut m = tree.members(id).to_vec();
                m.sort_unstable();
                m
            })
            .collect();
        sets.sort();
        sets
    }

    #[test]
    fn singleton_tree() {
        let tree = BallTree::build(&[2.0, 5.0], 2, 30).unwrap();
        assert_eq!(tree.len(), 1);
        assert!(tree.node(0).is_leaf());
        assert_eq!(tree.node(0).radius, 0.0);
        assert_eq!(tree.pivot(0), &[2.0, 5.0]);
        assert_eq!(tree.structural_float_count(), 36);
        assert_eq!(tree.node_counts(), NodeCounts { leaves: 1, internals: 0, depth: 1 });
    }

    #[test]
    fn collinear_points_split_on_the_line() {
        let tree = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(tree.pivot(0), &[1.5]);
        assert_eq!(tree.node(0).radius, 1.5);
        // four points at f = 2 get ⌈8/2⌉ = 4 singleton leaves under two pairs
        let (l, r) = tree.node(0).children().unwrap();
        let mut left = tree.members(l).to_vec();
        left.sort_unstable();
        assert_eq!(left, vec![0, 1]);
        assert_eq!(tree.pivot(l), &[0.5]);
        assert_eq!(tree.pivot(r), &[2.5]);
        assert_eq!(leaf_sets(&tree), vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn two_leaf_accounting() {
        let tree = line(&[0.0, 1.0]);
        assert_eq!(tree.node_counts(), NodeCounts { leaves: 2, internals: 1, depth: 2 });
        assert_eq!(tree.structural_float_count(), 24);
    }

    #[test]
    fn capacity_below_two_is_rejected() {
        assert_eq!(BallTree::build(&[0.0], 1, 1).unwrap_err(), TreeError::InvalidCapacity(1));
        assert_eq!(BallTree::build(&[], 1, 4).unwrap_err(), TreeError::Empty);
    }

    #[test]
    fn duplicates_split_evenly() {
        let tree = BallTree::build(&[1.0; 9], 1, 2).unwrap();
        let (l, r) = tree.node(0).children().unwrap();
        assert_eq!(tree.node(l).count, 5);
        assert_eq!(tree.node(r).count, 4);
        assert_eq!(tree.node(0).radius, 0.0);
    }

    #[test]
    fn structural_invariants_hold() {
        for (n, f) in [(1usize, 2usize), (7, 2), (100, 3), (999, 30), (1000, 7)] {
            let data = generate_synthetic(n, 3, n.min(4), n as u64, 0.2).unwrap();
            let tree = BallTree::from_dataset(&data, f).unwrap();
            let counts = tree.node_counts();
            assert_eq!(counts.internals + 1, counts.leaves);
            assert_eq!(counts.leaves, leaf_budget(n, f));
            let mut seen = vec![false; n];
            for id in 0..tree.len() {
                let node = tree.node(id);
                for &i in tree.members(id) {
                    assert!(dist(tree.pivot(id), data.point(i)) <= node.radius);
                }
                match node.children() {
                    Some((l, r)) => assert_eq!(tree.node(l).count + tree.node(r).count, node.count),
                    None => {
                        assert!(node.count <= f && node.count >= 1);
                        for &i in tree.members(id) {
                            assert!(!seen[i]);
                            seen[i] = true;
                        }
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn dump_lists_every_node() {
        let tree = line(&[0.0, 1.0, 2.0, 3.0]);
        let dump = tree.debug_dump();
        assert_eq!(dump.lines().count(), tree.len());
        assert_eq!(dump.lines().next().unwrap(), "1 1.5 1.5 4");
    }
}
