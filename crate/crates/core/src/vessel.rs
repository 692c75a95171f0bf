//! Idealized artery-with-aneurysm geometry and its signed distance field.
//!
//! The artery is a tube of constant diameter around a planar quadratic Bézier
//! centerline; the aneurysm is a sphere whose center sits beside the middle
//! of the centerline. Distances are negative inside the lumen or the sac,
//! zero on the wall and positive outside.
//!
//! The centerline is prolonged by straight tangent extensions at both ends so
//! that a crimped stent, which is considerably longer than the free device,
//! always has a lumen to be positioned in.

use std::io::{self, Read, Write};

use log::warn;
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::spatial::{KdTree, PolylineHit, PolylineIndex};

/// Planar quadratic Bézier curve; all control points share one x coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BezierCenterline {
    pub p0: Point3<f64>,
    pub p1: Point3<f64>,
    pub p2: Point3<f64>,
}

impl BezierCenterline {
    pub fn new(p0: Point3<f64>, p1: Point3<f64>, p2: Point3<f64>) -> Result<Self> {
        const TOL: f64 = 1e-12;
        if (p0.x - p1.x).abs() > TOL || (p0.x - p2.x).abs() > TOL {
            return Err(Error::Geometry("Bézier control points must share their x coordinate".into()));
        }
        if (p2 - p0).norm() <= TOL {
            return Err(Error::Geometry("Bézier end points coincide".into()));
        }
        Ok(Self { p0, p1, p2 })
    }

    /// Point on the curve at `t ∈ [0, 1]`.
    pub fn point(&self, t: f64) -> Result<Point3<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("Bézier parameter {t} outside [0, 1]")));
        }
        Ok(self.eval(t))
    }

    pub(crate) fn eval(&self, t: f64) -> Point3<f64> {
        let s = 1.0 - t;
        Point3::from(self.p0.coords * (s * s) + self.p1.coords * (2.0 * t * s) + self.p2.coords * (t * t))
    }

    /// First derivative `dB/dt`.
    pub fn derivative(&self, t: f64) -> Vector3<f64> {
        (self.p1 - self.p0) * (2.0 * (1.0 - t)) + (self.p2 - self.p1) * (2.0 * t)
    }

    /// `n + 1` points at uniform parameter spacing.
    pub fn polyline(&self, n: usize) -> Vec<Point3<f64>> {
        let n = n.max(1);
        (0..=n).map(|i| self.eval(i as f64 / n as f64)).collect()
    }

    pub fn arc_length(&self, n: usize) -> f64 {
        self.polyline(n).windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Fixed part of the vessel construction, shared by every sample of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselFrame {
    pub p0: [f64; 3],
    pub p2: [f64; 3],
    /// Segments used to discretize the Bézier centerline.
    pub n_polyline: usize,
    /// Length of the straight tangent prolongation at each end [mm].
    pub extension: f64,
}

impl Default for VesselFrame {
    fn default() -> Self {
        Self { p0: [0.0, 0.0, 0.0], p2: [0.0, 0.0, 20.0], n_polyline: 400, extension: 60.0 }
    }
}

/// The five geometric deployment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselParams {
    pub y_p1: f64,
    pub z_p1: f64,
    pub d_v: f64,
    pub d_a: f64,
    /// Offset of the aneurysm center from the centerline midpoint along y.
    pub y_ca: f64,
}

#[derive(Debug, Clone)]
pub struct VesselModel {
    pub centerline: BezierCenterline,
    pub d_v: f64,
    pub d_a: f64,
    pub c_a: Point3<f64>,
    pub n_polyline: usize,
    pub extension: f64,
    index: PolylineIndex,
    /// Arc length at every polyline vertex, zero at the Bézier start.
    stations: Vec<f64>,
    bezier_length: f64,
    rim: KdTree,
    /// Points closer than this to the centerline have a unique, locally
    /// searchable nearest point.
    reach: f64,
}

impl VesselModel {
    pub fn new(
        centerline: BezierCenterline,
        d_v: f64,
        d_a: f64,
        c_a: Point3<f64>,
        n_polyline: usize,
        extension: f64,
    ) -> Result<Self> {
        if !(d_v > 0.0 && d_a > 0.0) {
            return Err(Error::Geometry(format!("vessel and aneurysm diameters must be positive ({d_v}, {d_a})")));
        }
        if n_polyline < 1 || !(extension >= 0.0) {
            return Err(Error::Geometry("invalid centerline discretization".into()));
        }
        let mid = centerline.eval(0.5);
        let off = c_a - mid;
        if off.x.abs() > 1e-9 || off.z.abs() > 1e-9 {
            return Err(Error::Geometry("aneurysm center must be offset from B(0.5) along y only".into()));
        }

        let bez = centerline.polyline(n_polyline);
        let bezier_length: f64 = bez.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let mut points = Vec::with_capacity(bez.len() + 2);
        let mut stations = Vec::with_capacity(bez.len() + 2);
        if extension > 0.0 {
            let t0 = centerline.derivative(0.0).normalize();
            points.push(centerline.p0 - t0 * extension);
            stations.push(-extension);
        }
        let mut s = 0.0;
        for (i, p) in bez.iter().enumerate() {
            if i > 0 {
                s += (p - bez[i - 1]).norm();
            }
            points.push(*p);
            stations.push(s);
        }
        if extension > 0.0 {
            let t1 = centerline.derivative(1.0).normalize();
            points.push(centerline.p2 + t1 * extension);
            stations.push(s + extension);
        }

        let mut model = Self {
            centerline,
            d_v,
            d_a,
            c_a,
            n_polyline,
            extension,
            index: PolylineIndex::new(points),
            stations,
            bezier_length,
            rim: KdTree::default(),
            reach: 0.5 * min_curvature_radius(&centerline),
        };
        model.rim = KdTree::new(model.trace_rim(720, 360));
        Ok(model)
    }

    /// Builds the vessel from the geometric parameters and the fixed frame.
    pub fn from_params(params: &VesselParams, frame: &VesselFrame) -> Result<Self> {
        let p0 = Point3::from(frame.p0);
        let p2 = Point3::from(frame.p2);
        let p1 = Point3::new(p0.x, params.y_p1, params.z_p1);
        let centerline = BezierCenterline::new(p0, p1, p2)?;
        let c_a = centerline.eval(0.5) + Vector3::new(0.0, params.y_ca, 0.0);
        Self::new(centerline, params.d_v, params.d_a, c_a, frame.n_polyline, frame.extension)
    }

    pub fn vessel_radius(&self) -> f64 {
        0.5 * self.d_v
    }

    pub fn aneurysm_radius(&self) -> f64 {
        0.5 * self.d_a
    }

    pub fn bezier_length(&self) -> f64 {
        self.bezier_length
    }

    /// Vertices of the discretized centerline, including the extensions.
    pub fn centerline_points(&self) -> &[Point3<f64>] {
        self.index.points()
    }

    /// Arc length of each centerline vertex, measured from `P0`.
    pub fn centerline_stations(&self) -> &[f64] {
        &self.stations
    }

    /// Point at arc length `s` along the extended centerline (`s = 0` at `P0`).
    pub fn centerline_at(&self, s: f64) -> Result<Point3<f64>> {
        let first = self.stations[0];
        let last = *self.stations.last().unwrap();
        if s < first - 1e-12 || s > last + 1e-12 {
            return Err(Error::Placement(format!("arc length {s} outside centerline [{first}, {last}]")));
        }
        let k = self.stations.partition_point(|&x| x <= s).clamp(1, self.stations.len() - 1);
        let (s0, s1) = (self.stations[k - 1], self.stations[k]);
        let pts = self.index.points();
        let t = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        Ok(pts[k - 1] + (pts[k] - pts[k - 1]) * t)
    }

    pub fn centerline_hit(&self, p: &Point3<f64>) -> PolylineHit {
        self.index.nearest(p)
    }

    /// Distance to the tube wall (negative inside the tube).
    pub fn tube_distance(&self, p: &Point3<f64>) -> f64 {
        self.index.nearest(p).distance - self.vessel_radius()
    }

    /// Distance to the aneurysm sphere (negative inside).
    pub fn sphere_distance(&self, p: &Point3<f64>) -> f64 {
        (p - self.c_a).norm() - self.aneurysm_radius()
    }

    /// `min(tube, sphere)`: exact outside the union, a lower bound on the depth inside.
    pub fn sdf_min_union(&self, p: &Point3<f64>) -> f64 {
        self.tube_distance(p).min(self.sphere_distance(p))
    }

    /// Signed distance to the wall of the tube ∪ sphere union.
    pub fn sdf_eval(&self, p: &Point3<f64>) -> f64 {
        self.sdf_with_normal(p, self.index.nearest(p)).0
    }

    /// Signed distance and outward wall normal, reusing `hint` (the last
    /// nearest centerline segment of this query point) to skip the global
    /// search when the point is well within the centerline's reach.
    pub fn sdf_hinted(&self, p: &Point3<f64>, hint: &mut usize) -> (f64, Vector3<f64>) {
        let mut hit = self.index.nearest_from(p, *hint);
        if hit.distance >= self.reach {
            hit = self.index.nearest(p);
        }
        *hint = hit.segment;
        self.sdf_with_normal(p, hit)
    }

    fn sdf_with_normal(&self, p: &Point3<f64>, hit: PolylineHit) -> (f64, Vector3<f64>) {
        let r_v = self.vessel_radius();
        let r_a = self.aneurysm_radius();
        let d_t = hit.distance - r_v;
        let rel = p - self.c_a;
        let dist_a = rel.norm();
        let d_s = dist_a - r_a;
        let dir_t = if hit.distance > 1e-12 { (p - hit.point) / hit.distance } else { self.away_from_sphere(&hit) };
        let dir_s = if dist_a > 1e-12 { rel / dist_a } else { self.away_from_tube() };
        if d_t >= 0.0 && d_s >= 0.0 {
            return if d_t <= d_s { (d_t, dir_t) } else { (d_s, dir_s) };
        }

        // Inside the union: the nearest wall point is either the unconstrained
        // nearest point of one surface (if it is not buried in the other
        // solid) or a point on the rim where the two surfaces meet.
        let mut best = (f64::INFINITY, Vector3::zeros());
        let q_t = hit.point + dir_t * r_v;
        if (q_t - self.c_a).norm() >= r_a - 1e-12 {
            best = (d_t.abs(), dir_t);
        }
        if d_s.abs() < best.0 {
            let q_s = self.c_a + dir_s * r_a;
            if self.tube_distance(&q_s) >= -1e-12 {
                best = (d_s.abs(), dir_s);
            }
        }
        // any rim point is at least this far away
        if best.0 > d_t.abs().max(d_s.abs()) {
            if let Some((q, d)) = self.rim.nearest(p) {
                if d < best.0 {
                    best = (d, (q - p).try_normalize(1e-15).unwrap_or(dir_t));
                }
            }
        }
        if best.0.is_finite() {
            (-best.0, best.1)
        } else if d_t <= d_s {
            (d_t, dir_t)
        } else {
            (d_s, dir_s)
        }
    }

    /// Central-difference gradient of [`Self::sdf_eval`], normalized.
    pub fn sdf_gradient(&self, p: &Point3<f64>) -> Result<Vector3<f64>> {
        fd_gradient(|q| self.sdf_eval(q), p)
    }

    fn away_from_sphere(&self, hit: &PolylineHit) -> Vector3<f64> {
        let pts = self.index.points();
        let tangent = (pts[hit.segment + 1] - pts[hit.segment]).normalize();
        let to_c = self.c_a - hit.point;
        let perp = to_c - tangent * tangent.dot(&to_c);
        perp.try_normalize(1e-12).map(|v| -v).unwrap_or_else(|| tangent.cross(&Vector3::x()).normalize())
    }

    fn away_from_tube(&self) -> Vector3<f64> {
        let hit = self.index.nearest(&self.c_a);
        (self.c_a - hit.point).try_normalize(1e-12).unwrap_or_else(Vector3::y)
    }

    /// Samples the curve(s) where the sphere surface crosses the tube wall by
    /// scanning the sphere along meridians and parallels.
    fn trace_rim(&self, n_lon: usize, n_lat: usize) -> Vec<Point3<f64>> {
        let r_a = self.aneurysm_radius();
        let axis = -self.away_from_tube();
        let e1 = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (e1 - axis * axis.dot(&e1)).normalize();
        let e2 = axis.cross(&e1);
        let point = |theta: f64, phi: f64| {
            self.c_a + (axis * theta.cos() + (e1 * phi.cos() + e2 * phi.sin()) * theta.sin()) * r_a
        };
        let f = |theta: f64, phi: f64| self.tube_distance(&point(theta, phi));
        let bisect = |mut a: f64, mut b: f64, fa: f64, g: &dyn Fn(f64) -> f64| {
            let mut fa = fa;
            for _ in 0..50 {
                let m = 0.5 * (a + b);
                let fm = g(m);
                if (fm < 0.0) == (fa < 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };

        let mut rim = Vec::new();
        let two_pi = std::f64::consts::TAU;
        let pi = std::f64::consts::PI;
        // Meridians.
        for j in 0..n_lon {
            let phi = two_pi * j as f64 / n_lon as f64;
            let g = |th: f64| f(th, phi);
            let mut prev_t = 0.0;
            let mut prev_f = g(0.0);
            for i in 1..=n_lat {
                let th = pi * i as f64 / n_lat as f64;
                let fv = g(th);
                if (fv < 0.0) != (prev_f < 0.0) {
                    let root = bisect(prev_t, th, prev_f, &g);
                    rim.push(point(root, phi));
                }
                prev_t = th;
                prev_f = fv;
            }
        }
        // Parallels.
        for i in 1..n_lat {
            let th = pi * i as f64 / n_lat as f64;
            let g = |phi: f64| f(th, phi);
            let mut prev_p = 0.0;
            let mut prev_f = g(0.0);
            for j in 1..=n_lon {
                let phi = two_pi * j as f64 / n_lon as f64;
                let fv = g(phi);
                if (fv < 0.0) != (prev_f < 0.0) {
                    let root = bisect(prev_p, phi, prev_f, &g);
                    rim.push(point(th, root));
                }
                prev_p = phi;
                prev_f = fv;
            }
        }
        rim
    }

    /// Number of sampled points on the tube/sphere intersection curve.
    pub fn rim_len(&self) -> usize {
        self.rim.len()
    }

    /// Axis-aligned box of `{P0, P1, P2, C_a}` inflated by `D_a/2 + 2 mm`.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let c = &self.centerline;
        let mut lo = c.p0.inf(&c.p1).inf(&c.p2).inf(&self.c_a);
        let mut hi = c.p0.sup(&c.p1).sup(&c.p2).sup(&self.c_a);
        let pad = Vector3::repeat(self.aneurysm_radius() + 2.0);
        lo -= pad;
        hi += pad;
        (lo, hi)
    }

    /// Triangulated wall of the union for rendering. Triangles buried inside
    /// the other solid are dropped, so the rim is resolved to about one
    /// triangle width.
    pub fn surface_mesh(&self, n_around: usize, max_edge: f64) -> TriMesh {
        let n_around = n_around.max(3);
        let r_v = self.vessel_radius();
        let pts = self.index.points();

        let mut stations = Vec::new();
        for w in pts.windows(2) {
            let len = (w[1] - w[0]).norm();
            let n = ((len / max_edge).ceil() as usize).max(1);
            for k in 0..n {
                stations.push(w[0] + (w[1] - w[0]) * (k as f64 / n as f64));
            }
        }
        stations.push(*pts.last().unwrap());

        // The centerline lies in a plane x = const, so x̂ is a constant binormal.
        let mut tube = TriMesh::default();
        for (i, c) in stations.iter().enumerate() {
            let prev = stations[i.saturating_sub(1)];
            let next = stations[(i + 1).min(stations.len() - 1)];
            let t = (next - prev).normalize();
            let n = t.cross(&Vector3::x()).normalize();
            for k in 0..n_around {
                let phi = std::f64::consts::TAU * k as f64 / n_around as f64;
                tube.vertices.push(c + (Vector3::x() * phi.cos() + n * phi.sin()) * r_v);
            }
        }
        for i in 0..stations.len() - 1 {
            for k in 0..n_around {
                let a = (i * n_around + k) as u32;
                let b = (i * n_around + (k + 1) % n_around) as u32;
                let c = a + n_around as u32;
                let d = b + n_around as u32;
                tube.triangles.push([a, b, d]);
                tube.triangles.push([a, d, c]);
            }
        }
        let r_a = self.aneurysm_radius();
        let tube = tube.retain_by_centroid(|p| (p - self.c_a).norm() >= r_a);

        let sphere = uv_sphere(self.c_a, r_a, max_edge);
        let sphere = sphere.retain_by_centroid(|p| self.tube_distance(p) >= 0.0);

        let mut mesh = tube;
        mesh.append(&sphere);
        mesh
    }
}

fn min_curvature_radius(c: &BezierCenterline) -> f64 {
    // B'' is constant for a quadratic curve
    let acc = (c.p0.coords - 2.0 * c.p1.coords + c.p2.coords) * 2.0;
    (0..=1000)
        .map(|i| {
            let d = c.derivative(i as f64 / 1000.0);
            let k = d.cross(&acc).norm() / d.norm().powi(3);
            if k > 1e-12 {
                1.0 / k
            } else {
                1e6
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn uv_sphere(center: Point3<f64>, radius: f64, max_edge: f64) -> TriMesh {
    let n_lat = ((std::f64::consts::PI * radius / max_edge).ceil() as usize).max(4);
    let n_lon = 2 * n_lat;
    let mut mesh = TriMesh::default();
    for i in 0..=n_lat {
        let th = std::f64::consts::PI * i as f64 / n_lat as f64;
        for j in 0..n_lon {
            let ph = std::f64::consts::TAU * j as f64 / n_lon as f64;
            mesh.vertices.push(center + Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * radius);
        }
    }
    for i in 0..n_lat {
        for j in 0..n_lon {
            let a = (i * n_lon + j) as u32;
            let b = (i * n_lon + (j + 1) % n_lon) as u32;
            let c = a + n_lon as u32;
            let d = b + n_lon as u32;
            if i > 0 {
                mesh.triangles.push([a, d, b]);
            }
            if i + 1 < n_lat {
                mesh.triangles.push([a, c, d]);
            }
        }
    }
    mesh
}

pub(crate) fn fd_gradient(f: impl Fn(&Point3<f64>) -> f64, p: &Point3<f64>) -> Result<Vector3<f64>> {
    const H: f64 = 1e-6;
    let mut g = Vector3::zeros();
    for k in 0..3 {
        let mut a = *p;
        let mut b = *p;
        a[k] += H;
        b[k] -= H;
        g[k] = (f(&a) - f(&b)) / (2.0 * H);
    }
    let n = g.norm();
    if n < 1e-12 {
        return Err(Error::Geometry(format!("degenerate distance gradient at {p:?}")));
    }
    Ok(g / n)
}

/// Anything that can answer signed-distance queries for contact.
pub trait SignedDistance: Sync {
    fn signed_distance(&self, p: &Point3<f64>) -> f64;

    fn gradient(&self, p: &Point3<f64>) -> Result<Vector3<f64>> {
        fd_gradient(|q| self.signed_distance(q), p)
    }

    /// Distance and unit gradient together. `hint` is per-point scratch
    /// state that implementations may use to accelerate repeated queries.
    fn distance_and_normal(&self, p: &Point3<f64>, _hint: &mut usize) -> Result<(f64, Vector3<f64>)> {
        Ok((self.signed_distance(p), self.gradient(p)?))
    }
}

impl SignedDistance for VesselModel {
    fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.sdf_eval(p)
    }

    fn distance_and_normal(&self, p: &Point3<f64>, hint: &mut usize) -> Result<(f64, Vector3<f64>)> {
        Ok(self.sdf_hinted(p, hint))
    }
}

/// Result of a grid lookup; `clamped` is set when the query left the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub value: f64,
    pub clamped: bool,
}

/// Regular-grid signed distance samples with trilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub origin: Point3<f64>,
    pub spacing: f64,
    pub dims: [usize; 3],
    /// Row-major, x fastest.
    pub values: Vec<f32>,
}

const SDF_MAGIC: &[u8; 4] = b"SDF1";

impl SdfGrid {
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn sample(&self, p: &Point3<f64>) -> GridSample {
        let mut clamped = false;
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.spacing;
            let max = (self.dims[a] - 1) as f64;
            let uc = if u < 0.0 {
                clamped = true;
                0.0
            } else if u > max {
                clamped = true;
                max
            } else {
                u
            };
            let c = (uc.floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            frac[a] = uc - c as f64;
        }
        let [i, j, k] = cell;
        let v = |di: usize, dj: usize, dk: usize| self.values[self.node_index(i + di, j + dj, k + dk)] as f64;
        let [fx, fy, fz] = frac;
        let c00 = v(0, 0, 0) * (1.0 - fx) + v(1, 0, 0) * fx;
        let c10 = v(0, 1, 0) * (1.0 - fx) + v(1, 1, 0) * fx;
        let c01 = v(0, 0, 1) * (1.0 - fx) + v(1, 0, 1) * fx;
        let c11 = v(0, 1, 1) * (1.0 - fx) + v(1, 1, 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        GridSample { value: c0 * (1.0 - fz) + c1 * fz, clamped }
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(SDF_MAGIC)?;
        for c in self.origin.coords.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&self.spacing.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SDF_MAGIC {
            return Err(Error::Format("not an SDF1 grid".into()));
        }
        let mut f8 = [0u8; 8];
        let mut next_f64 = |r: &mut R| -> io::Result<f64> {
            r.read_exact(&mut f8)?;
            Ok(f64::from_le_bytes(f8))
        };
        let origin = Point3::new(next_f64(&mut r)?, next_f64(&mut r)?, next_f64(&mut r)?);
        let spacing = next_f64(&mut r)?;
        let mut dims = [0usize; 3];
        let mut u4 = [0u8; 4];
        for d in &mut dims {
            r.read_exact(&mut u4)?;
            *d = u32::from_le_bytes(u4) as usize;
        }
        if dims.iter().any(|&d| d < 2) || !(spacing > 0.0) {
            return Err(Error::Format("invalid SDF1 header".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { origin, spacing, dims, values })
    }
}

impl SignedDistance for SdfGrid {
    fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        let s = self.sample(p);
        if s.clamped {
            warn!("SDF query outside the baked grid at {p:?}; value clamped");
        }
        s.value
    }

    fn gradient(&self, p: &Point3<f64>) -> Result<Vector3<f64>> {
        fd_gradient(|q| self.sample(q).value, p)
    }
}

/// Samples [`VesselModel::sdf_eval`] on a regular grid over the vessel box.
pub fn bake_sdf_grid(v: &VesselModel, spacing: f64) -> Result<SdfGrid> {
    if !(spacing > 0.0) {
        return Err(Error::Argument(format!("grid spacing must be positive, got {spacing}")));
    }
    let (lo, hi) = v.bounding_box();
    let ext = hi - lo;
    let dims = [0, 1, 2].map(|a| ((ext[a] / spacing).ceil() as usize + 1).max(2));
    let grid = SdfGrid { origin: lo, spacing, dims, values: Vec::new() };
    let plane = dims[0] * dims[1];
    let values = (0..dims[2])
        .into_par_iter()
        .flat_map_iter(|k| {
            let grid = &grid;
            (0..plane).map(move |ij| {
                let (i, j) = (ij % dims[0], ij / dims[0]);
                v.sdf_eval(&grid.node_position(i, j, k)) as f32
            })
        })
        .collect();
    Ok(SdfGrid { values, ..grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_curve() -> BezierCenterline {
        BezierCenterline::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 4.0, 10.0), Point3::new(0.0, 0.0, 20.0))
            .unwrap()
    }

    fn example_vessel() -> VesselModel {
        let params = VesselParams { y_p1: 4.0, z_p1: 10.0, d_v: 3.0, d_a: 7.0, y_ca: 3.6 };
        VesselModel::from_params(&params, &VesselFrame { extension: 10.0, ..Default::default() }).unwrap()
    }

    fn straight_vessel() -> VesselModel {
        // aneurysm parked far away from the tube
        let params = VesselParams { y_p1: 0.0, z_p1: 10.0, d_v: 3.0, d_a: 2.0, y_ca: 40.0 };
        VesselModel::from_params(&params, &VesselFrame { extension: 10.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn bezier_endpoints_and_midpoint() {
        let c = example_curve();
        assert_eq!(c.point(0.0).unwrap(), c.p0);
        assert_eq!(c.point(1.0).unwrap(), c.p2);
        let m = c.point(0.5).unwrap();
        assert!((m - Point3::new(0.0, 2.0, 10.0)).norm() < 1e-15);
        assert!(matches!(c.point(1.5), Err(Error::Domain(_))));
        assert!(matches!(c.point(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn bezier_rejects_non_planar_and_degenerate() {
        let o = Point3::origin();
        assert!(BezierCenterline::new(o, Point3::new(1.0, 1.0, 1.0), Point3::new(0.0, 0.0, 5.0)).is_err());
        assert!(BezierCenterline::new(o, Point3::new(0.0, 1.0, 1.0), o).is_err());
    }

    #[test]
    fn arc_length_converges() {
        let c = example_curve();
        let coarse = c.arc_length(200);
        let fine = c.arc_length(2000);
        assert!((coarse - fine).abs() / fine < 1e-3);
    }

    #[test]
    fn sdf_at_sphere_center_and_axis() {
        let v = example_vessel();
        assert!((v.sdf_eval(&v.c_a) + 0.5 * v.d_a).abs() < 1e-9);

        let s = straight_vessel();
        let p = Point3::new(0.0, 0.0, 3.0);
        assert!((s.sdf_eval(&p) + 1.5).abs() < 1e-9);
    }

    #[test]
    fn sdf_is_exact_outside_the_union() {
        let v = example_vessel();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p =
                Point3::new(rng.random_range(-6.0..6.0), rng.random_range(-4.0..12.0), rng.random_range(-2.0..22.0));
            let m = v.sdf_min_union(&p);
            if m > 0.0 {
                assert_eq!(v.sdf_eval(&p), m);
            } else {
                // every wall point lies outside both open solids
                assert!(v.sdf_eval(&p) <= m + 1e-12);
            }
        }
    }

    #[test]
    fn rim_is_traced_and_lies_on_both_surfaces() {
        let v = example_vessel();
        assert!(v.rim_len() > 100);
        for p in v.rim.points() {
            assert!(v.tube_distance(p).abs() < 1e-9);
            assert!(v.sphere_distance(p).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_points_away_from_wall() {
        let s = straight_vessel();
        let g = s.sdf_gradient(&Point3::new(0.0, 0.8, 5.0)).unwrap();
        assert!((g - Vector3::y()).norm() < 1e-6);

        let v = example_vessel();
        let e = Vector3::new(1.0, 2.0, -0.5).normalize();
        let g = v.sdf_gradient(&(v.c_a + e * 6.0)).unwrap();
        assert!((g - e).norm() < 1e-6);
    }

    #[test]
    fn hinted_query_matches_exact_value_and_gradient() {
        let v = example_vessel();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut hint = 0;
        for _ in 0..3000 {
            let p = Point3::new(rng.random_range(-4.0..4.0), rng.random_range(-3.0..9.0), rng.random_range(-5.0..25.0));
            let (d, n) = v.sdf_hinted(&p, &mut hint);
            assert_eq!(d, v.sdf_eval(&p));
            if let Ok(g) = v.sdf_gradient(&p) {
                // away from the medial axis the analytic normal is the gradient
                if (g.norm() - 1.0).abs() < 1e-9 && d.abs() > 0.05 && g.dot(&n) > 0.0 {
                    assert!((g - n).norm() < 1e-4, "p {p:?}");
                }
            }
        }
    }

    #[test]
    fn gradient_degenerate_on_flat_field() {
        assert!(fd_gradient(|_| 1.0, &Point3::origin()).is_err());
    }

    #[test]
    fn grid_reproduces_nodes_and_round_trips() {
        let v = example_vessel();
        let grid = bake_sdf_grid(&v, 0.5).unwrap();
        for &(i, j, k) in &[(0, 0, 0), (3, 7, 11), (grid.dims[0] - 1, grid.dims[1] - 1, grid.dims[2] - 1)] {
            let p = grid.node_position(i, j, k);
            let s = grid.sample(&p);
            assert!(!s.clamped);
            assert_eq!(s.value, grid.values[grid.node_index(i, j, k)] as f64);
        }
        let outside = grid.sample(&(grid.origin - Vector3::repeat(1.0)));
        assert!(outside.clamped);

        let mut buf = Vec::new();
        grid.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SDF1");
        assert_eq!(buf.len(), 4 + 32 + 12 + 4 * grid.values.len());
        assert_eq!(SdfGrid::read(&buf[..]).unwrap(), grid);
        assert!(bake_sdf_grid(&v, 0.0).is_err());
    }

    #[test]
    fn centerline_arc_length_lookup() {
        let v = example_vessel();
        assert!((v.centerline_at(0.0).unwrap() - v.centerline.p0).norm() < 1e-12);
        let end = v.centerline_at(v.bezier_length()).unwrap();
        assert!((end - v.centerline.p2).norm() < 1e-9);
        assert!(v.centerline_at(v.bezier_length() + 10.0 + 1.0).is_err());
    }
}
