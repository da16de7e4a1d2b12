//! Exact nearest-neighbor search over a point cloud.
//!
//! The tree answers 1-NN and k-NN queries exactly (no approximation), and
//! breaks distance ties by the lowest point index so queries are fully
//! deterministic. The tree is immutable after construction and safe to query
//! from multiple threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Point3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
enum Node {
    /// Left child is the next node in the array; `right` is stored.
    Split { axis: usize, value: f64, right: u32 },
    Leaf { start: u32, len: u32 },
}

/// A balanced spatial index over a fixed set of points.
#[derive(Debug, Clone)]
pub struct KdTree {
    coords: Vec<Vector3<f64>>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// One query result: the point index in the original cloud and the exact
/// Euclidean distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Result<KdTree> {
        if points.is_empty() {
            return Err(Error::EmptyReferenceCloud);
        }
        let coords: Vec<Vector3<f64>> = points.iter().map(|p| p.vector()).collect();
        let mut order: Vec<u32> = (0..coords.len() as u32).collect();
        let mut nodes = Vec::new();
        build_node(&coords, &mut order, 0, &mut nodes);
        Ok(KdTree { coords, order, nodes })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Exact nearest neighbor; ties broken by lowest index.
    pub fn nearest(&self, query: &Point3) -> Neighbor {
        let q = query.vector();
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(0, &q, &mut best);
        Neighbor {
            index: best.1 as usize,
            distance: best.0.sqrt(),
        }
    }

    fn nearest_rec(&self, node: usize, q: &Vector3<f64>, best: &mut (f64, u32)) {
        match self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.order[start as usize..(start + len) as usize] {
                    let d2 = (self.coords[i as usize] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split { axis, value, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (node + 1, right as usize)
                } else {
                    (right as usize, node + 1)
                };
                self.nearest_rec(near, q, best);
                // <= keeps equal-distance candidates reachable so the
                // lowest-index tie-break stays exact.
                if diff * diff <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The k exact nearest neighbors, sorted by (distance, index) ascending.
    /// Returns fewer than k entries when the cloud is smaller than k.
    pub fn knn(&self, k: usize, query: &Point3) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let q = query.vector();
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, &q, k, &mut heap);
        let mut out: Vec<Neighbor> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Neighbor {
                index: e.idx as usize,
                distance: e.d2.sqrt(),
            })
            .collect();
        out.shrink_to_fit();
        out
    }

    fn knn_rec(&self, node: usize, q: &Vector3<f64>, k: usize, heap: &mut BinaryHeap<HeapEntry>) {
        match self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.order[start as usize..(start + len) as usize] {
                    let d2 = (self.coords[i as usize] - q).norm_squared();
                    let entry = HeapEntry { d2, idx: i };
                    if heap.len() < k {
                        heap.push(entry);
                    } else if entry < *heap.peek().expect("heap non-empty") {
                        heap.pop();
                        heap.push(entry);
                    }
                }
            }
            Node::Split { axis, value, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (node + 1, right as usize)
                } else {
                    (right as usize, node + 1)
                };
                self.knn_rec(near, q, k, heap);
                let must_visit = heap.len() < k
                    || diff * diff <= heap.peek().expect("heap non-empty").d2;
                if must_visit {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    d2: f64,
    idx: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn build_node(coords: &[Vector3<f64>], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) {
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            len: order.len() as u32,
        });
        return;
    }

    // Split along the axis of largest extent within this subset.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        let c = coords[i as usize];
        for axis in 0..3 {
            lo[axis] = lo[axis].min(c[axis]);
            hi[axis] = hi[axis].max(c[axis]);
        }
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coords[a as usize][axis]
            .total_cmp(&coords[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = coords[order[mid] as usize][axis];

    let node_index = nodes.len();
    nodes.push(Node::Split { axis, value, right: 0 });
    let (left, right) = order.split_at_mut(mid);
    build_node(coords, left, offset, nodes);
    let right_index = nodes.len() as u32;
    if let Node::Split { right: r, .. } = &mut nodes[node_index] {
        *r = right_index;
    }
    build_node(coords, right, offset + mid, nodes);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn brute_force_nearest(points: &[Point3], q: &Point3) -> Neighbor {
        let qv = q.vector();
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p.vector() - qv).norm_squared();
            if d2 < best.0 || (d2 == best.0 && i < best.1) {
                best = (d2, i);
            }
        }
        Neighbor {
            index: best.1,
            distance: best.0.sqrt(),
        }
    }

    fn brute_force_knn(points: &[Point3], q: &Point3, k: usize) -> Vec<Neighbor> {
        let qv = q.vector();
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.vector() - qv).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all.into_iter()
            .map(|(d2, i)| Neighbor {
                index: i,
                distance: d2.sqrt(),
            })
            .collect()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                )
            })
            .collect()
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(
            KdTree::build(&[]),
            Err(Error::EmptyReferenceCloud)
        ));
    }

    #[test]
    fn single_point_always_wins() {
        let points = vec![Point3::new(1.0, 2.0, 3.0)];
        let tree = KdTree::build(&points).unwrap();
        let n = tree.nearest(&Point3::new(-5.0, 0.0, 9.0));
        assert_eq!(n.index, 0);
    }

    #[test]
    fn grid_point_query_has_zero_distance() {
        let mut points = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..5 {
                    points.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let tree = KdTree::build(&points).unwrap();
        let n = tree.nearest(&Point3::new(2.0, 3.0, 4.0));
        assert_eq!(n.distance, 0.0);
        assert_eq!(points[n.index], Point3::new(2.0, 3.0, 4.0));
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let points = random_points(1000, 42);
        let tree = KdTree::build(&points).unwrap();
        let queries = random_points(100, 43);
        for q in &queries {
            let got = tree.nearest(q);
            let expected = brute_force_nearest(&points, q);
            assert_eq!(got.index, expected.index);
            assert_eq!(got.distance, expected.distance);
        }
    }

    #[test]
    fn knn_matches_brute_force() {
        let points = random_points(500, 7);
        let tree = KdTree::build(&points).unwrap();
        let queries = random_points(40, 8);
        for q in &queries {
            for k in [1usize, 3, 10, 33] {
                let got = tree.knn(k, q);
                let expected = brute_force_knn(&points, q, k);
                assert_eq!(got.len(), expected.len());
                for (g, e) in got.iter().zip(expected.iter()) {
                    assert_eq!(g.index, e.index, "k={k}");
                    assert_eq!(g.distance, e.distance, "k={k}");
                }
            }
        }
    }

    #[test]
    fn knn_larger_than_cloud_returns_everything() {
        let points = random_points(9, 3);
        let tree = KdTree::build(&points).unwrap();
        let got = tree.knn(50, &Point3::origin());
        assert_eq!(got.len(), 9);
    }

    #[test]
    fn distance_ties_resolve_to_lowest_index() {
        // Several coincident points plus symmetric neighbors around a query.
        let points = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
        ];
        let tree = KdTree::build(&points).unwrap();
        let n = tree.nearest(&Point3::origin());
        assert_eq!(n.index, 0);
        let knn = tree.knn(3, &Point3::origin());
        assert_eq!(
            knn.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }
}
