//! Colony overlap graph and its connected clusters.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Axis-aligned box: top-left corner plus size, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height
    }
}

/// Intersection area normalized by the smaller box's area.
pub fn overlap_fraction(a: &BBox, b: &BBox) -> f64 {
    let smaller = a.area().min(b.area());
    if smaller <= 0.0 {
        return 0.0;
    }
    (a.intersection_area(b) / smaller).clamp(0.0, 1.0)
}

/// Symmetric, irreflexive adjacency over `n` boxes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapGraph {
    n: usize,
    adjacency: Vec<bool>,
}

impl OverlapGraph {
    pub fn empty(n: usize) -> Self {
        OverlapGraph {
            n,
            adjacency: vec![false; n * n],
        }
    }

    /// Builds a graph from an edge list. Self-loops are ignored.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            g.set_edge(i, j, true);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        if i == j {
            return;
        }
        self.adjacency[i * self.n + j] = on;
        self.adjacency[j * self.n + i] = on;
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count() / 2
    }
}

/// Edge `(i, j)` exists iff `overlap_fraction > threshold` (strictly).
pub fn build_adjacency(boxes: &[BBox], threshold: f64) -> OverlapGraph {
    let n = boxes.len();
    let mut g = OverlapGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if overlap_fraction(&boxes[i], &boxes[j]) > threshold {
                g.set_edge(i, j, true);
            }
        }
    }
    g
}

/// Disjoint groups of node indices; each group is sorted and groups are ordered
/// by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPartition {
    pub groups: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Breadth-first search over the overlap graph.
pub fn connected_components(g: &OverlapGraph) -> ClusterPartition {
    let mut seen = vec![false; g.len()];
    let mut groups = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut group = Vec::new();
        while let Some(i) = queue.pop_front() {
            group.push(i);
            for j in g.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        group.sort_unstable();
        groups.push(group);
    }
    ClusterPartition { groups }
}

/// Convenience: boxes → clusters in one call.
pub fn cluster_boxes(boxes: &[BBox], threshold: f64) -> ClusterPartition {
    connected_components(&build_adjacency(boxes, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(overlap_fraction(&a, &a), 1.0);
        assert_eq!(overlap_fraction(&a, &BBox::new(20.0, 0.0, 5.0, 5.0)), 0.0);
        let b = BBox::new(9.0, 0.0, 10.0, 10.0);
        assert!((overlap_fraction(&a, &b) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(10.0, 0.0, 10.0, 10.0);
        assert_eq!(overlap_fraction(&a, &b), 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        // intersection 1 × 100 = 100 over min area 100 × 100: exactly 0.01
        let a = BBox::new(0.0, 0.0, 100.0, 100.0);
        let b = BBox::new(99.0, 0.0, 100.0, 100.0);
        assert_eq!(overlap_fraction(&a, &b), 0.01);
        assert_eq!(build_adjacency(&[a, b], 0.01).edge_count(), 0);
        let c = BBox::new(98.5, 0.0, 100.0, 100.0);
        assert_eq!(build_adjacency(&[a, c], 0.01).edge_count(), 1);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let p = connected_components(&OverlapGraph::empty(5));
        assert_eq!(p.groups, (0..5).map(|i| vec![i]).collect::<Vec<_>>());
    }

    #[test]
    fn path_graph_is_one_cluster() {
        let g = OverlapGraph::from_edges(3, [(0, 1), (1, 2)]);
        assert_eq!(connected_components(&g).groups, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn groups_ordered_by_smallest_member() {
        let g = OverlapGraph::from_edges(5, [(4, 1), (3, 0)]);
        assert_eq!(
            connected_components(&g).groups,
            vec![vec![0, 3], vec![1, 4], vec![2]]
        );
    }

    #[test]
    fn small_box_inside_large_box() {
        let big = BBox::new(0.0, 0.0, 100.0, 100.0);
        let small = BBox::new(40.0, 40.0, 5.0, 5.0);
        assert_eq!(overlap_fraction(&big, &small), 1.0);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 1.0..40.0f64, 1.0..40.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn overlap_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = overlap_fraction(&a, &b);
            prop_assert_eq!(ab, overlap_fraction(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn relabeling_preserves_components(
            edges in proptest::collection::vec((0usize..12, 0usize..12), 0..20),
            seed in any::<u64>(),
        ) {
            let n = 12;
            let mut perm: Vec<usize> = (0..n).collect();
            // Fisher–Yates driven by a fixed LCG so the strategy stays simple
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let g = OverlapGraph::from_edges(n, edges.iter().copied());
            let h = OverlapGraph::from_edges(n, edges.iter().map(|&(a, b)| (perm[a], perm[b])));
            let mut mapped: Vec<Vec<usize>> = connected_components(&g)
                .groups
                .into_iter()
                .map(|grp| {
                    let mut v: Vec<usize> = grp.into_iter().map(|i| perm[i]).collect();
                    v.sort_unstable();
                    v
                })
                .collect();
            mapped.sort();
            let mut direct = connected_components(&h).groups;
            direct.sort();
            prop_assert_eq!(mapped, direct);
        }

        #[test]
        fn edge_changes_are_monotone(
            edges in proptest::collection::vec((0usize..10, 0usize..10), 1..15),
            extra in (0usize..10, 0usize..10),
        ) {
            let base = OverlapGraph::from_edges(10, edges.iter().copied());
            let mut more = base.clone();
            more.set_edge(extra.0, extra.1, true);
            let mut fewer = base.clone();
            fewer.set_edge(edges[0].0, edges[0].1, false);
            let c_base = connected_components(&base).len();
            prop_assert!(connected_components(&more).len() <= c_base);
            prop_assert!(connected_components(&fewer).len() >= c_base);
        }
    }
}
