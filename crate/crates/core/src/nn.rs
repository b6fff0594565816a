//! Nearest-neighbour search and symmetric Chamfer distance.

use crate::real::Real;

const LEAF: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { lo: u32, hi: u32 },
    Split { axis: u8, at: f64, left: u32, right: u32 },
}

/// Static kd-tree over a point set.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, &mut nodes);
        }
        KdTree { points, order, nodes }
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest stored point and its squared distance.
    /// Ties resolve to the lowest index.
    pub fn nearest(&self, q: &[f64; D]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &[f64; D], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for &i in &self.order[lo as usize..hi as usize] {
                    let d = dist2(&self.points[i as usize], q);
                    if d < best.1 || (d == best.1 && (i as usize) < best.0) {
                        *best = (i as usize, d);
                    }
                }
            }
            Node::Split { axis, at, left, right } => {
                let diff = q[axis as usize] - at;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, best);
                if diff * diff <= best.1 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }
}

fn build<const D: usize>(points: &[[f64; D]], order: &mut [u32], offset: u32, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF {
        nodes.push(Node::Leaf {
            lo: offset,
            hi: offset + order.len() as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for &i in order.iter() {
        for c in 0..D {
            lo[c] = lo[c].min(points[i as usize][c]);
            hi[c] = hi[c].max(points[i as usize][c]);
        }
    }
    let axis = (0..D)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a as usize][axis].total_cmp(&points[b as usize][axis]));
    let at = points[order[mid] as usize][axis];
    nodes.push(Node::Leaf { lo: 0, hi: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid as u32, nodes);
    nodes[id as usize] = Node::Split {
        axis: axis as u8,
        at,
        left,
        right,
    };
    id
}

#[inline]
fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for c in 0..D {
        let d = a[c] - b[c];
        s += d * d;
    }
    s
}

/// Symmetric Chamfer distance: half the sum of the two directed mean
/// nearest-neighbour Euclidean distances. `None` if either set is empty.
pub fn chamfer<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let ta = KdTree::new(a.to_vec());
    let tb = KdTree::new(b.to_vec());
    Some(0.5 * (directed(a, &tb) + directed(b, &ta)))
}

pub fn chamfer_2d(a: &[[f64; 2]], b: &[[f64; 2]]) -> Option<f64> {
    chamfer(a, b)
}

pub fn chamfer_3d(a: &[[f64; 3]], b: &[[f64; 3]]) -> Option<f64> {
    chamfer(a, b)
}

fn directed<const D: usize>(from: &[[f64; D]], to: &KdTree<D>) -> f64 {
    let mut s = 0.0;
    for p in from {
        s += to.nearest(p).map_or(0.0, |(_, d2)| d2.sqrt());
    }
    s / from.len() as f64
}

/// Chamfer value and its gradient with respect to `a`, with `b` fixed and
/// indexed by `tb`. Matches are held constant.
pub fn chamfer_with_grad<const D: usize>(a: &[[f64; D]], tb: &KdTree<D>) -> Option<(f64, Vec<[f64; D]>)> {
    if a.is_empty() || tb.is_empty() {
        return None;
    }
    let mut grad = vec![[0.0; D]; a.len()];
    let wa = 0.5 / a.len() as f64;
    let wb = 0.5 / tb.len() as f64;
    let mut fwd = 0.0;
    for (p, g) in a.iter().zip(grad.iter_mut()) {
        let (j, d2) = tb.nearest(p).expect("nonempty tree");
        let d = d2.sqrt();
        fwd += d;
        if d > 0.0 {
            let q = &tb.points[j];
            for c in 0..D {
                g[c] += wa * (p[c] - q[c]) / d;
            }
        }
    }
    let ta = KdTree::new(a.to_vec());
    let mut bwd = 0.0;
    for q in tb.points() {
        let (i, d2) = ta.nearest(q).expect("nonempty tree");
        let d = d2.sqrt();
        bwd += d;
        if d > 0.0 {
            let p = &a[i];
            for c in 0..D {
                grad[i][c] += wb * (p[c] - q[c]) / d;
            }
        }
    }
    Some((wa * fwd + wb * bwd, grad))
}

/// Differentiable Chamfer distance between moving points `a` and the fixed
/// set in `tb`, recorded as a single node.
pub fn chamfer_to_fixed<T: Real, const D: usize>(a: &[[T; D]], tb: &KdTree<D>) -> Option<T> {
    let vals: Vec<[f64; D]> = a.iter().map(|p| p.map(|x| x.value())).collect();
    let (v, g) = chamfer_with_grad(&vals, tb)?;
    let xs: Vec<T> = a.iter().flat_map(|p| p.iter().copied()).collect();
    let partials: Vec<f64> = g.iter().flat_map(|p| p.iter().copied()).collect();
    Some(T::custom(v, &partials, &xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
        let dir = |x: &[[f64; D]], y: &[[f64; D]]| {
            x.iter()
                .map(|p| y.iter().map(|q| dist2(p, q).sqrt()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        0.5 * (dir(a, b) + dir(b, a))
    }

    fn cloud<const D: usize>(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; D]> {
        (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn spec_examples() {
        assert_eq!(chamfer_2d(&[[0.0, 0.0]], &[[3.0, 4.0]]), Some(5.0));
        let a = [[1.0, 2.0], [3.0, -1.0]];
        assert_eq!(chamfer_2d(&a, &a), Some(0.0));
        assert_eq!(chamfer_2d(&[], &a), None);
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = cloud(&mut rng, 777);
        let tree = KdTree::new(pts.clone());
        for _ in 0..200 {
            let q: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
            let (i, d) = tree.nearest(&q).unwrap();
            let best = pts.iter().map(|p| dist2(p, &q)).fold(f64::INFINITY, f64::min);
            assert_eq!(d, best);
            assert_eq!(dist2(&pts[i], &q), best);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<[f64; 2]> = cloud(&mut rng, 200);
        let b: Vec<[f64; 2]> = cloud(&mut rng, 300);
        assert!((chamfer_2d(&a, &b).unwrap() - brute(&a, &b)).abs() < 1e-9);
        let a: Vec<[f64; 3]> = cloud(&mut rng, 250);
        let b: Vec<[f64; 3]> = cloud(&mut rng, 90);
        assert!((chamfer_3d(&a, &b).unwrap() - brute(&a, &b)).abs() < 1e-9);
        let (v, _) = chamfer_with_grad(&a, &KdTree::new(b.clone())).unwrap();
        assert!((v - brute(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<[f64; 2]> = cloud(&mut rng, 20);
        let b: Vec<[f64; 2]> = cloud(&mut rng, 30);
        let tb = KdTree::new(b.clone());
        let flat: Vec<f64> = a.iter().flat_map(|p| p.iter().copied()).collect();
        let g = gradient(&flat, &vec![true; flat.len()], |x| {
            let pts: Vec<[_; 2]> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
            (chamfer_to_fixed(&pts, &tb).unwrap(), ())
        });
        let f = |v: &[f64]| {
            let pts: Vec<[f64; 2]> = v.chunks(2).map(|c| [c[0], c[1]]).collect();
            brute(&pts, &b)
        };
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += h;
            let up = f(&p);
            p[i] -= 2.0 * h;
            let dn = f(&p);
            assert!(((up - dn) / (2.0 * h) - g.grad[i]).abs() < 1e-5, "coord {i}");
        }
    }
}
