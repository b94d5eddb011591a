//! Exact k-nearest-neighbour search over a point set of any dimension.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// k-d tree over borrowed row-major points.
#[derive(Debug)]
pub struct KdTree<'a> {
    data: &'a [f64],
    d: usize,
    order: Vec<usize>,
    root: Node,
}

#[derive(Clone, Copy, PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(data: &'a [f64], d: usize) -> Self {
        let n = data.len() / d;
        let mut order: Vec<usize> = (0..n).collect();
        let root = Self::build(data, d, &mut order, 0, n);
        KdTree { data, d, order, root }
    }

    fn build(data: &[f64], d: usize, order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        let mut best = (0, -1.0);
        for j in 0..d {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = data[i * d + j];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best.1 {
                best = (j, hi - lo);
            }
        }
        let dim = best.0;
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| data[a * d + dim].total_cmp(&data[b * d + dim]));
        let value = data[slice[mid] * d + dim];
        let left = Box::new(Self::build(data, d, order, start, start + mid));
        let right = Box::new(Self::build(data, d, order, start + mid, end));
        Node::Split { dim, value, left, right }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Euclidean distance to the `k`-th nearest point, skipping index
    /// `exclude` (used for leave-one-out queries within the same set).
    pub fn kth_distance(&self, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, q, k, exclude, &mut heap);
        heap.peek().map_or(f64::INFINITY, |c| c.0.sqrt())
    }

    fn search(&self, node: &Node, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Cand>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let p = &self.data[i * self.d..(i + 1) * self.d];
                    let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if heap.len() < k {
                        heap.push(Cand(d2, i));
                    } else if d2 < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(Cand(d2, i));
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// Brute-force counterpart of [`KdTree::kth_distance`].
pub fn brute_kth_distance(data: &[f64], d: usize, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
    let mut dists: Vec<f64> = data
        .chunks_exact(d)
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(_, p)| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    if dists.len() < k {
        return f64::INFINITY;
    }
    dists.select_nth_unstable_by(k - 1, f64::total_cmp);
    dists[k - 1].sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn matches_brute_force() {
        for d in [1, 2, 5] {
            let mut r = rng::stream(d as u64, 0);
            let pts = rng::normal_vec(&mut r, 500 * d);
            let tree = KdTree::new(&pts, d);
            for i in 0..50 {
                let q = &pts[i * d..(i + 1) * d];
                for k in [1, 5] {
                    assert_eq!(tree.kth_distance(q, k, Some(i)), brute_kth_distance(&pts, d, q, k, Some(i)));
                }
                let q2 = rng::normal_vec(&mut r, d);
                assert_eq!(tree.kth_distance(&q2, 5, None), brute_kth_distance(&pts, d, &q2, 5, None));
            }
        }
    }

    proptest! {
        #[test]
        fn tree_equals_brute(pts in proptest::collection::vec(-5.0f64..5.0, 3 * 40..3 * 80), k in 1usize..8) {
            let n = pts.len() / 3;
            let pts = &pts[..n * 3];
            let tree = KdTree::new(pts, 3);
            for i in 0..n {
                let q = &pts[i * 3..i * 3 + 3];
                prop_assert_eq!(tree.kth_distance(q, k, Some(i)), brute_kth_distance(pts, 3, q, k, Some(i)));
            }
        }
    }
}
