//! Nearest-neighbor correspondence through a kd-tree, and the RMSE used
//! for every threshold in the pipeline.

use crate::error::{check_dim, Error, Result};
use crate::points::PointSet;

/// `pairs[i] = (moving_index, fixed_index)` with the matching distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

impl Correspondence {
    /// Pairs `i <-> i` for known correspondences.
    pub fn identity(fixed: &PointSet, moving: &PointSet) -> Result<Self> {
        check_dim(fixed.dim(), moving.dim())?;
        if fixed.len() != moving.len() {
            return Err(Error::Argument(format!(
                "identity correspondence needs equal sizes, got {} and {}",
                fixed.len(),
                moving.len()
            )));
        }
        let pairs: Vec<_> = (0..moving.len()).map(|i| (i, i)).collect();
        let distances = pairs
            .iter()
            .map(|&(m, f)| dist2(moving.point(m), fixed.point(f)).sqrt())
            .collect();
        Ok(Self { pairs, distances })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub(crate) fn check_bounds(&self, fixed: &PointSet, moving: &PointSet) -> Result<()> {
        check_dim(fixed.dim(), moving.dim())?;
        if self.distances.len() != self.pairs.len() {
            return Err(Error::Argument(
                "correspondence distance list has the wrong length".into(),
            ));
        }
        for &(m, f) in &self.pairs {
            if m >= moving.len() || f >= fixed.len() {
                return Err(Error::Argument(format!(
                    "correspondence pair ({m}, {f}) out of bounds"
                )));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a copy of the fixed points.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &PointSet) -> Self {
        let mut tree = Self {
            dim: points.dim(),
            coords: points.coords().to_vec(),
            perm: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !tree.perm.is_empty() {
            let n = tree.perm.len();
            tree.build_node(0, n);
        }
        tree
    }

    fn coord(&self, idx: usize, axis: usize) -> f64 {
        self.coords[idx * self.dim + axis]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the axis of largest spread
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.perm[start..end] {
                let v = self.coord(i, axis);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        let mid = start + (end - start) / 2;
        let (dim, coords) = (self.dim, &self.coords);
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + best_axis]
                .total_cmp(&coords[b * dim + best_axis])
                .then(a.cmp(&b))
        });
        let value = self.coord(self.perm[mid], best_axis);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis: best_axis,
            value,
            left,
            right,
        };
        id
    }

    /// Closest point as `(index, squared distance)`; ties go to the lowest index.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d = dist2(q, &self.coords[i * self.dim..(i + 1) * self.dim]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // equality still visits: a tie there may carry a lower index
                if delta * delta <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// For each moving point, its nearest fixed point.
pub fn nearest_neighbors(fixed: &PointSet, moving: &PointSet) -> Result<Correspondence> {
    let tree = KdTree::build(fixed);
    nearest_with_tree(&tree, fixed, moving)
}

pub fn nearest_with_tree(tree: &KdTree, fixed: &PointSet, moving: &PointSet) -> Result<Correspondence> {
    check_dim(fixed.dim(), moving.dim())?;
    if fixed.is_empty() || moving.is_empty() {
        return Err(Error::Argument(
            "nearest-neighbor search needs non-empty sets".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(moving.len());
    let mut distances = Vec::with_capacity(moving.len());
    for (m, q) in moving.iter().enumerate() {
        let (f, d2) = tree.nearest(q).expect("tree is non-empty");
        pairs.push((m, f));
        distances.push(d2.sqrt());
    }
    Ok(Correspondence { pairs, distances })
}

/// `sqrt(mean ||x_f - y_m||^2)` over the pairs.
pub fn rmse(fixed: &PointSet, moving: &PointSet, corr: &Correspondence) -> Result<f64> {
    if corr.is_empty() {
        return Err(Error::Argument("RMSE of an empty correspondence".into()));
    }
    corr.check_bounds(fixed, moving)?;
    let ss: f64 = corr
        .pairs
        .iter()
        .map(|&(m, f)| dist2(moving.point(m), fixed.point(f)))
        .sum();
    Ok((ss / corr.len() as f64).sqrt())
}
