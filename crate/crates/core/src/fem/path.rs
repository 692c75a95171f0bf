//! Stent centerline kinematics used to steer the crimped device into the vessel.
//!
//! A path is the polyline through the ring centers. Each segment is given the
//! rotation that aligns it with the preceding one (the segment before the
//! first is `+z`); chaining those rotations straightens the path onto the z
//! axis, and applying only a fraction of every angle yields intermediate
//! shapes between a straight path and a curved one.

use nalgebra::{Point3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vessel::VesselModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterlinePath {
    pub points: Vec<Point3<f64>>,
}

impl CenterlinePath {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Geometry("a centerline path needs at least two points".into()));
        }
        Ok(Self { points })
    }

    /// `seg_i = R_i − R_{i−1}` for `i = 1..N`.
    pub fn segments(&self) -> Vec<Vector3<f64>> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Points at equal arc-length spacing, both end points included.
    pub fn resample(&self, n: usize) -> Result<Vec<Point3<f64>>> {
        if n < 2 {
            return Err(Error::Argument(format!("need at least two resampled points, got {n}")));
        }
        let total = self.length();
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        let mut walked = 0.0;
        for k in 0..n {
            if k == n - 1 {
                out.push(*self.points.last().unwrap());
                break;
            }
            let target = total * k as f64 / (n - 1) as f64;
            loop {
                let len = (self.points[seg + 1] - self.points[seg]).norm();
                if walked + len >= target || seg + 2 == self.points.len() {
                    let t = if len > 0.0 { ((target - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
                    out.push(self.points[seg] + (self.points[seg + 1] - self.points[seg]) * t);
                    break;
                }
                walked += len;
                seg += 1;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRotation {
    pub axis: Unit<Vector3<f64>>,
    pub angle: f64,
}

impl SegmentRotation {
    pub fn rotation(&self, fraction: f64) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&self.axis, fraction * self.angle)
    }
}

/// Rotation taking each segment onto the direction of the previous one.
///
/// Collinear neighbors get a zero angle about the x axis.
pub fn segment_rotations(path: &CenterlinePath) -> Result<Vec<SegmentRotation>> {
    let mut prev = Vector3::z();
    let mut out = Vec::with_capacity(path.points.len() - 1);
    for (i, seg) in path.segments().into_iter().enumerate() {
        let len = seg.norm();
        if len < 1e-14 {
            return Err(Error::Geometry(format!("segment {} has zero length", i + 1)));
        }
        let cur = seg / len;
        let cross = cur.cross(&prev);
        let angle = cross.norm().atan2(cur.dot(&prev));
        let axis = Unit::try_new(cross, 1e-15).unwrap_or_else(Vector3::x_axis);
        out.push(SegmentRotation { axis, angle });
        prev = cur;
    }
    Ok(out)
}

/// `M_tot,i = M_1(f) ⋯ M_i(f)` for every segment.
pub fn cumulative_rotations(rots: &[SegmentRotation], fraction: f64) -> Vec<Rotation3<f64>> {
    let mut acc = Rotation3::identity();
    rots.iter()
        .map(|r| {
            acc *= r.rotation(fraction);
            acc
        })
        .collect()
}

/// Lays every segment of `path` along `+z`, keeping the first point.
pub fn straighten(path: &CenterlinePath) -> Result<CenterlinePath> {
    let rots = segment_rotations(path)?;
    let tot = cumulative_rotations(&rots, 1.0);
    let mut points = Vec::with_capacity(path.points.len());
    points.push(path.points[0]);
    for (seg, m) in path.segments().iter().zip(&tot) {
        let last = *points.last().unwrap();
        points.push(last + m * seg);
    }
    CenterlinePath::new(points)
}

/// Lays the stent centerline along the vessel centerline, starting at arc
/// length fraction `eta` of the Bézier part. Each point is the first point
/// further along the vessel centerline whose distance from its predecessor
/// equals the original segment length.
pub fn project_centerline(c0: &CenterlinePath, vessel: &VesselModel, eta: f64) -> Result<CenterlinePath> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("deployment site {eta} outside [0, 1]")));
    }
    let s0 = eta * vessel.bezier_length();
    let start = vessel.centerline_at(s0)?;
    let pts = vessel.centerline_points();
    let stations = vessel.centerline_stations();
    let mut seg = stations.partition_point(|&x| x <= s0).clamp(1, stations.len() - 1) - 1;
    let mut t = {
        let len = stations[seg + 1] - stations[seg];
        if len > 0.0 {
            ((s0 - stations[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };

    let mut out = Vec::with_capacity(c0.points.len());
    out.push(start);
    for (i, d) in c0.segments().iter().map(|s| s.norm()).enumerate() {
        let center = *out.last().unwrap();
        let mut found = None;
        while seg + 1 < pts.len() {
            if let Some(root) = sphere_exit(&pts[seg], &pts[seg + 1], &center, d, t) {
                found = Some(root);
                break;
            }
            seg += 1;
            t = 0.0;
        }
        let Some(root) = found else {
            return Err(Error::Placement(format!(
                "stent overruns the vessel centerline at segment {} of {}",
                i + 1,
                c0.points.len() - 1
            )));
        };
        t = root;
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
    CenterlinePath::new(out)
}

/// Smallest parameter in `[t_min, 1]` where segment `a→b` is at distance `d` from `c`.
fn sphere_exit(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: f64, t_min: f64) -> Option<f64> {
    let ab = b - a;
    let ac = a - c;
    let qa = ab.norm_squared();
    if qa == 0.0 {
        return None;
    }
    let qb = 2.0 * ab.dot(&ac);
    let qc = ac.norm_squared() - d * d;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots; the larger one is where the segment leaves the ball
    let q = -0.5 * (qb + qb.signum() * sq);
    if q == 0.0 {
        return None;
    }
    let exit = (q / qa).max(qc / q);
    (exit >= t_min - 1e-15 && exit <= 1.0).then(|| exit.max(t_min))
}

/// One intermediate configuration of the positioning sequence.
#[derive(Debug, Clone)]
pub struct PathFrame {
    pub path: CenterlinePath,
    /// Rotation carrying each segment of the start path onto this one.
    pub segment_rotations: Vec<Rotation3<f64>>,
}

impl PathFrame {
    /// Orientation of ring `i`: the rotation of its single neighboring segment
    /// at the ends, the halfway slerp of the two adjacent segments elsewhere.
    pub fn ring_rotation(&self, i: usize) -> Rotation3<f64> {
        let segs = &self.segment_rotations;
        if i == 0 {
            segs[0]
        } else if i >= segs.len() {
            segs[segs.len() - 1]
        } else {
            let a = UnitQuaternion::from_rotation_matrix(&segs[i - 1]);
            let b = UnitQuaternion::from_rotation_matrix(&segs[i]);
            a.slerp(&b, 0.5).to_rotation_matrix()
        }
    }
}

/// Intermediate paths from `c0` to `ct` in `n_steps` equal angle fractions.
///
/// The translation of the first point is blended linearly; the shape follows
/// from applying fraction `k/n_steps` of each of `ct`'s segment rotations.
pub fn interpolate_frames(c0: &CenterlinePath, ct: &CenterlinePath, n_steps: usize) -> Result<Vec<PathFrame>> {
    if c0.points.len() != ct.points.len() {
        return Err(Error::Geometry(format!(
            "paths differ in point count ({} vs {})",
            c0.points.len(),
            ct.points.len()
        )));
    }
    if n_steps == 0 {
        return Err(Error::Argument("need at least one positioning step".into()));
    }
    let straight0 = cumulative_rotations(&segment_rotations(c0)?, 1.0);
    let rots_t = segment_rotations(ct)?;
    let segs0 = c0.segments();
    let shift = ct.points[0] - c0.points[0];

    (1..=n_steps)
        .map(|k| {
            let f = k as f64 / n_steps as f64;
            let tot = cumulative_rotations(&rots_t, f);
            let seg_rots: Vec<Rotation3<f64>> = tot.iter().zip(&straight0).map(|(m, s0)| m.inverse() * s0).collect();
            let mut points = Vec::with_capacity(c0.points.len());
            points.push(c0.points[0] + shift * f);
            for (seg, r) in segs0.iter().zip(&seg_rots) {
                let last = *points.last().unwrap();
                points.push(last + r * seg);
            }
            Ok(PathFrame { path: CenterlinePath::new(points)?, segment_rotations: seg_rots })
        })
        .collect()
}

pub fn interpolate_path(c0: &CenterlinePath, ct: &CenterlinePath, n_steps: usize) -> Result<Vec<CenterlinePath>> {
    Ok(interpolate_frames(c0, ct, n_steps)?.into_iter().map(|f| f.path).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vessel::{VesselFrame, VesselParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn straight_path(n: usize, dz: f64) -> CenterlinePath {
        CenterlinePath::new((0..n).map(|i| Point3::new(0.0, 0.0, i as f64 * dz)).collect()).unwrap()
    }

    fn random_smooth_path(rng: &mut ChaCha8Rng, n: usize) -> CenterlinePath {
        let mut dir = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0).normalize();
        let mut p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
        let mut pts = vec![p];
        for _ in 1..n {
            let kick =
                Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            dir = (dir + kick).normalize();
            p += dir * rng.random_range(0.2..1.0);
            pts.push(p);
        }
        CenterlinePath::new(pts).unwrap()
    }

    #[test]
    fn straight_path_has_no_rotation() {
        for r in segment_rotations(&straight_path(6, 0.5)).unwrap() {
            assert_eq!(r.angle, 0.0);
        }
    }

    #[test]
    fn quarter_turn_axis_follows_cross_product_order() {
        let path = CenterlinePath::new(vec![Point3::origin(), Point3::new(0.0, 1.0, 0.0)]).unwrap();
        let r = segment_rotations(&path).unwrap()[0];
        assert!((r.angle - FRAC_PI_2).abs() < 1e-15);
        // seg × previous = y × z = +x
        assert!((r.axis.into_inner() - Vector3::x()).norm() < 1e-15);
        assert!((r.rotation(1.0) * Vector3::y() - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn zero_length_segment_is_rejected() {
        let path = CenterlinePath::new(vec![Point3::origin(), Point3::origin()]).unwrap();
        assert!(matches!(segment_rotations(&path), Err(Error::Geometry(_))));
    }

    #[test]
    fn straightening_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let path = random_smooth_path(&mut rng, 30);
            let s = straighten(&path).unwrap();
            let base = s.points[0];
            for p in &s.points {
                let off = p - base;
                assert!((off.x * off.x + off.y * off.y).sqrt() < 1e-9);
            }
            assert!((s.length() - path.length()).abs() < 1e-9 * path.length());
        }
    }

    #[test]
    fn cumulative_rotations_are_proper_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let path = random_smooth_path(&mut rng, 20);
        for m in cumulative_rotations(&segment_rotations(&path).unwrap(), 0.37) {
            let v = Vector3::new(rng.random(), rng.random(), rng.random());
            assert!(((m * v).norm() - v.norm()).abs() < 1e-12);
            assert!((m.matrix().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_endpoints_and_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ct = random_smooth_path(&mut rng, 15);
        let lens: Vec<f64> = ct.segments().iter().map(|s| s.norm()).collect();
        let mut pts = vec![Point3::new(0.0, 0.0, 0.0)];
        for l in &lens {
            let last = *pts.last().unwrap();
            pts.push(last + Vector3::z() * *l);
        }
        let c0 = CenterlinePath::new(pts).unwrap();

        let single = interpolate_path(&c0, &ct, 1).unwrap();
        assert_eq!(single.len(), 1);
        for (p, q) in single[0].points.iter().zip(&ct.points) {
            assert!((p - q).norm() < 1e-9);
        }
        let frames = interpolate_path(&c0, &ct, 7).unwrap();
        for f in &frames {
            assert!((f.length() - c0.length()).abs() < 1e-9 * c0.length());
        }
        for (p, q) in frames[6].points.iter().zip(&ct.points) {
            assert!((p - q).norm() < 1e-9);
        }
        assert!(interpolate_path(&c0, &straight_path(3, 1.0), 2).is_err());
    }

    #[test]
    fn half_way_through_a_planar_right_angle() {
        let ct = CenterlinePath::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 1.0),
        ])
        .unwrap();
        let c0 = straight_path(3, 1.0);
        let mid = &interpolate_path(&c0, &ct, 2).unwrap()[0];
        let s = mid.segments();
        let angle = s[0].normalize().dot(&s[1].normalize()).acos();
        assert!((angle - FRAC_PI_2 / 2.0).abs() < 1e-6);
    }

    fn vessel(y_p1: f64) -> VesselModel {
        let p = VesselParams { y_p1, z_p1: 10.0, d_v: 3.0, d_a: 6.0, y_ca: 3.0 };
        VesselModel::from_params(&p, &VesselFrame { extension: 30.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn projection_on_straight_vessel_is_a_translation() {
        let v = vessel(0.0);
        let c0 = straight_path(21, 0.75);
        let ct = project_centerline(&c0, &v, 0.0).unwrap();
        for (p, q) in ct.points.iter().zip(&c0.points) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn projection_follows_curved_vessel_and_keeps_length() {
        let v = vessel(6.0);
        let c0 = straight_path(21, 1.5);
        let ct = project_centerline(&c0, &v, 0.4).unwrap();
        assert!((ct.length() - c0.length()).abs() < 1e-6 * c0.length());
        for (a, b) in ct.segments().iter().zip(c0.segments()) {
            assert!((a.norm() - b.norm()).abs() < 1e-9);
        }
        for p in &ct.points {
            assert!(v.centerline_hit(p).distance < 1e-9);
        }
        let s0 = 0.4 * v.bezier_length();
        assert!((ct.points[0] - v.centerline_at(s0).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn projection_overrun_is_a_placement_error() {
        let v = vessel(2.0);
        let c0 = straight_path(200, 1.0);
        assert!(matches!(project_centerline(&c0, &v, 0.5), Err(Error::Placement(_))));
    }

    #[test]
    fn resample_includes_end_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_smooth_path(&mut rng, 12);
        let q = p.resample(5).unwrap();
        assert_eq!(q.len(), 5);
        assert!((q[0] - p.points[0]).norm() < 1e-12);
        assert!((q[4] - p.points[11]).norm() < 1e-12);
        assert!(p.resample(1).is_err());
    }
}
