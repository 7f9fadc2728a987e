//! Exact nearest-neighbour search over delay vectors with a static kd-tree.

use alloc::vec::Vec;

const LEAF: usize = 8;

/// Implicit kd-tree over a flat `n x dim` point buffer. The index array is
/// arranged so that each subrange's median splits on `depth % dim`.
pub(crate) struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        build(points, dim, &mut order, 0);
        Self { points, dim, order }
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest point to `query` among those not rejected by `exclude`,
    /// as `(index, squared distance)`. Ties resolve to the smaller index.
    pub fn nearest(&self, query: &[f64], exclude: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.search(0, self.order.len(), 0, query, &exclude, &mut best);
        best
    }

    fn consider(&self, i: usize, query: &[f64], best: &mut Option<(usize, f64)>) {
        let d = sq_dist(self.point(i), query);
        let better = match *best {
            None => true,
            Some((bi, bd)) => d < bd || (d == bd && i < bi),
        };
        if better {
            *best = Some((i, d));
        }
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        query: &[f64],
        exclude: &impl Fn(usize) -> bool,
        best: &mut Option<(usize, f64)>,
    ) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                if !exclude(i) {
                    self.consider(i, query, best);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid];
        let axis = depth % self.dim;
        if !exclude(pivot) {
            self.consider(pivot, query, best);
        }
        let diff = query[axis] - self.point(pivot)[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, query, exclude, best);
        let prune = match *best {
            Some((_, bd)) => diff * diff > bd,
            None => false,
        };
        if !prune {
            self.search(far.0, far.1, depth + 1, query, exclude, best);
        }
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], depth: usize) {
    if order.len() <= LEAF {
        return;
    }
    let axis = depth % dim;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dim + axis]
            .total_cmp(&points[b * dim + axis])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, dim, left, depth + 1);
    build(points, dim, &mut right[1..], depth + 1);
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
