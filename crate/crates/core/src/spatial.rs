//! Nearest-point acceleration structures used by the distance queries.

use nalgebra::{Point3, Vector3};

/// Closest point on the segment `[a, b]` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> (Point3<f64>, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Result of a nearest-point query against a polyline.
#[derive(Debug, Clone, Copy)]
pub struct PolylineHit {
    pub distance: f64,
    pub point: Point3<f64>,
    pub segment: usize,
    pub t: f64,
}

const CHUNK: usize = 8;

#[derive(Debug, Clone)]
struct Chunk {
    first: usize,
    last: usize,
    center: Point3<f64>,
    radius: f64,
}

/// Exact nearest-point queries on an open polyline. Segments are grouped
/// into runs of consecutive segments bounded by spheres so most of the
/// polyline is culled by a lower bound.
#[derive(Debug, Clone)]
pub struct PolylineIndex {
    points: Vec<Point3<f64>>,
    chunks: Vec<Chunk>,
}

impl PolylineIndex {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        assert!(points.len() >= 2, "polyline needs at least two points");
        let nseg = points.len() - 1;
        let mut chunks = Vec::with_capacity(nseg / CHUNK + 1);
        let mut first = 0;
        while first < nseg {
            let last = (first + CHUNK).min(nseg);
            let mut lo = points[first];
            let mut hi = points[first];
            for q in &points[first..=last] {
                lo = lo.inf(q);
                hi = hi.sup(q);
            }
            let center = nalgebra::center(&lo, &hi);
            let radius = points[first..=last].iter().map(|q| (q - center).norm()).fold(0.0, f64::max);
            chunks.push(Chunk { first, last, center, radius });
            first = last;
        }
        Self { points, chunks }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn nearest(&self, p: &Point3<f64>) -> PolylineHit {
        let mut best = PolylineHit { distance: f64::INFINITY, point: self.points[0], segment: 0, t: 0.0 };
        let bound = |c: &Chunk| ((p - c.center).norm() - c.radius).max(0.0);
        // Seed with the most promising chunk, then sweep the rest.
        let seed = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (bound(c), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, i)| i)
            .unwrap_or(0);
        self.scan_chunk(p, &self.chunks[seed], &mut best);
        for (i, c) in self.chunks.iter().enumerate() {
            if i != seed && bound(c) < best.distance {
                self.scan_chunk(p, c, &mut best);
            }
        }
        best
    }

    /// Local descent from segment `hint`: moves to neighboring segments while
    /// the distance decreases. Exact whenever `p` is within the polyline's
    /// reach of the returned point.
    pub fn nearest_from(&self, p: &Point3<f64>, hint: usize) -> PolylineHit {
        let nseg = self.points.len() - 1;
        let eval = |s: usize| {
            let (q, t) = closest_on_segment(p, &self.points[s], &self.points[s + 1]);
            PolylineHit { distance: (p - q).norm(), point: q, segment: s, t }
        };
        let mut best = eval(hint.min(nseg - 1));
        while best.segment > 0 {
            let c = eval(best.segment - 1);
            if c.distance >= best.distance {
                break;
            }
            best = c;
        }
        while best.segment + 1 < nseg {
            let c = eval(best.segment + 1);
            if c.distance >= best.distance {
                break;
            }
            best = c;
        }
        best
    }

    fn scan_chunk(&self, p: &Point3<f64>, c: &Chunk, best: &mut PolylineHit) {
        for s in c.first..c.last {
            let (q, t) = closest_on_segment(p, &self.points[s], &self.points[s + 1]);
            let d = (p - q).norm();
            if d < best.distance {
                *best = PolylineHit { distance: d, point: q, segment: s, t };
            }
        }
    }

    /// Reference query visiting every segment.
    pub fn nearest_brute_force(&self, p: &Point3<f64>) -> PolylineHit {
        let mut best = PolylineHit { distance: f64::INFINITY, point: self.points[0], segment: 0, t: 0.0 };
        for s in 0..self.points.len() - 1 {
            let (q, t) = closest_on_segment(p, &self.points[s], &self.points[s + 1]);
            let d = (p - q).norm();
            if d < best.distance {
                best = PolylineHit { distance: d, point: q, segment: s, t };
            }
        }
        best
    }
}

/// Static 3-d tree over a point cloud.
#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    // split axis of the subtree whose median is stored at that index
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(mut points: Vec<Point3<f64>>) -> Self {
        let mut axes = vec![0u8; points.len()];
        build(&mut points, &mut axes);
        Self { points, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Nearest point and its distance, or `None` for an empty tree.
    pub fn nearest(&self, p: &Point3<f64>) -> Option<(Point3<f64>, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (0usize, f64::INFINITY);
        self.search(p, 0, self.points.len(), &mut best);
        Some((self.points[best.0], best.1.sqrt()))
    }

    fn search(&self, p: &Point3<f64>, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let q = &self.points[mid];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 {
            *best = (mid, d2);
        }
        let axis = self.axes[mid] as usize;
        let delta = p[axis] - q[axis];
        let (near, far) = if delta < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(p, near.0, near.1, best);
        if delta * delta < best.1 {
            self.search(p, far.0, far.1, best);
        }
    }
}

fn build(points: &mut [Point3<f64>], axes: &mut [u8]) {
    if points.is_empty() {
        return;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for q in points.iter() {
        lo = lo.inf(q);
        hi = hi.sup(q);
    }
    let ext: Vector3<f64> = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = points.len() / 2;
    points.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    axes[mid] = axis as u8;
    let (left, rest) = points.split_at_mut(mid);
    let (laxes, raxes) = axes.split_at_mut(mid);
    build(left, laxes);
    build(&mut rest[1..], &mut raxes[1..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point3<f64> {
        Point3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale))
    }

    #[test]
    fn polyline_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..257)
            .map(|i| {
                let t = i as f64 / 256.0;
                Point3::new(0.0, 5.0 * (6.0 * t).sin(), 20.0 * t)
            })
            .collect();
        let index = PolylineIndex::new(pts);
        for _ in 0..500 {
            let p = random_point(&mut rng, 12.0);
            let a = index.nearest(&p);
            let b = index.nearest_brute_force(&p);
            assert!((a.distance - b.distance).abs() < 1e-12);
        }
    }

    #[test]
    fn local_descent_agrees_near_a_smooth_polyline() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<_> = (0..401)
            .map(|i| {
                let t = i as f64 / 400.0;
                Point3::new(0.0, 4.0 * t * (1.0 - t), 20.0 * t)
            })
            .collect();
        let index = PolylineIndex::new(pts.clone());
        for _ in 0..500 {
            let k = rng.random_range(0..400);
            let p = pts[k]
                + Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
            let hint = rng.random_range(0..400);
            let a = index.nearest_from(&p, hint);
            let b = index.nearest_brute_force(&p);
            assert!((a.distance - b.distance).abs() < 1e-12);
        }
    }

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud: Vec<_> = (0..1000).map(|_| random_point(&mut rng, 3.0)).collect();
        let tree = KdTree::new(cloud.clone());
        for _ in 0..300 {
            let p = random_point(&mut rng, 4.0);
            let (_, d) = tree.nearest(&p).unwrap();
            let brute = cloud.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() < 1e-12);
        }
        assert!(KdTree::new(Vec::new()).nearest(&Point3::origin()).is_none());
    }
}
