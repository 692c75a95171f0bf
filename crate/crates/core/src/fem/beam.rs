//! Two-node corotational beam with a circular cross-section.
//!
//! Each element carries a frame that follows the chord; the deformation is
//! measured as small local rotations of the nodal triads relative to that
//! frame plus the change in chord length, and a linear Euler–Bernoulli law
//! is applied to those local quantities.

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};

/// Stiffness constants of a circular section of radius `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSection {
    /// EA [N]
    pub axial: f64,
    /// GJ [N·mm²]
    pub torsion: f64,
    /// EI [N·mm²]
    pub bending: f64,
    pub area: f64,
    /// Second moment of area about a diameter.
    pub inertia: f64,
}

impl BeamSection {
    pub fn circular(radius: f64, youngs: f64, shear: f64) -> Self {
        let area = std::f64::consts::PI * radius * radius;
        let inertia = 0.25 * std::f64::consts::PI * radius.powi(4);
        Self { axial: youngs * area, torsion: shear * 2.0 * inertia, bending: youngs * inertia, area, inertia }
    }
}

#[derive(Debug, Clone)]
pub struct BeamElement {
    pub nodes: [usize; 2],
    pub rest_length: f64,
    /// Initial element frame; column 0 is the chord direction.
    pub frame: Matrix3<f64>,
}

impl BeamElement {
    pub fn new(nodes: [usize; 2], a: &Point3<f64>, b: &Point3<f64>) -> Self {
        let d = b - a;
        let rest_length = d.norm();
        let e1 = d / rest_length;
        let helper = if e1.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e3 = e1.cross(&helper).normalize();
        let e2 = e3.cross(&e1);
        Self { nodes, rest_length, frame: Matrix3::from_columns(&[e1, e2, e3]) }
    }
}

/// Nodal forces and moments of one element, in global axes.
#[derive(Debug, Clone, Copy)]
pub struct ElementForces {
    pub force: [Vector3<f64>; 2],
    pub moment: [Vector3<f64>; 2],
    pub energy: f64,
}

/// Rotation vector of `m`, accurate for small angles.
pub(crate) fn rotation_log(m: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    quaternion_log(&q)
}

pub(crate) fn quaternion_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s < 1e-300 {
        return 2.0 * v;
    }
    v * (2.0 * s.atan2(w) / s)
}

/// Inverse of the tangent operator mapping a spin variation to the
/// variation of the rotation vector.
fn inverse_tangent(theta: &Vector3<f64>) -> Matrix3<f64> {
    let t = theta.norm();
    let skew = theta.cross_matrix();
    if t < 1e-6 {
        // series of (t/2)·cot(t/2) = 1 − t²/12 − …
        let c = 1.0 / 12.0 + t * t / 720.0;
        return Matrix3::identity() - 0.5 * skew + c * skew * skew;
    }
    let half = 0.5 * t;
    let a = half / half.tan();
    Matrix3::identity() - 0.5 * skew + ((1.0 - a) / (t * t)) * skew * skew
}

/// Internal forces of an element at nodal positions `x` and nodal rotations
/// `rot` (rotations relative to the undeformed configuration).
pub fn element_forces(
    el: &BeamElement,
    sec: &BeamSection,
    x: [&Point3<f64>; 2],
    rot: [&Matrix3<f64>; 2],
) -> ElementForces {
    let d = x[1] - x[0];
    let l = d.norm();
    let r1 = d / l;
    let t1 = rot[0] * el.frame;
    let t2 = rot[1] * el.frame;
    let q = 0.5 * (t1.column(1) + t2.column(1));
    let r3 = r1.cross(&q).normalize();
    let r2 = r3.cross(&r1);
    let rr = Matrix3::from_columns(&[r1, r2, r3]);
    let rrt = rr.transpose();

    let local1 = rrt * t1;
    let local2 = rrt * t2;
    let th1 = rotation_log(&local1);
    let th2 = rotation_log(&local2);

    let l0 = el.rest_length;
    let stretch = (l * l - l0 * l0) / (l + l0);
    let axial = sec.axial / l0 * stretch;
    let kt = sec.torsion / l0;
    let kb = sec.bending / l0;
    let twist = th1.x - th2.x;
    let m1_bar = Vector3::new(kt * twist, kb * (4.0 * th1.y + 2.0 * th2.y), kb * (4.0 * th1.z + 2.0 * th2.z));
    let m2_bar = Vector3::new(-kt * twist, kb * (2.0 * th1.y + 4.0 * th2.y), kb * (2.0 * th1.z + 4.0 * th2.z));
    let energy = 0.5 * axial * stretch
        + 0.5 * kt * twist * twist
        + kb * (2.0 * (th1.y * th1.y + th1.y * th2.y + th2.y * th2.y)
            + 2.0 * (th1.z * th1.z + th1.z * th2.z + th2.z * th2.z));

    let m1 = inverse_tangent(&th1).transpose() * m1_bar;
    let m2 = inverse_tangent(&th2).transpose() * m2_bar;

    // The frame's spin about r1 is slaved to the nodal triads through q.
    let q_loc = rrt * q;
    let q1 = local1.column(1);
    let q2 = local2.column(1);
    let eta = q_loc.x / q_loc.y;
    let s = m1 + m2;
    let g_u = Vector3::new(0.0, -s.z / l, (eta * s.x + s.y) / l);
    let g_r1 = Vector3::new(0.5 * q1.y / q_loc.y, -0.5 * q1.x / q_loc.y, 0.0) * s.x;
    let g_r2 = Vector3::new(0.5 * q2.y / q_loc.y, -0.5 * q2.x / q_loc.y, 0.0) * s.x;

    let f1 = rr * (-g_u) - r1 * axial;
    let f2 = rr * g_u + r1 * axial;
    ElementForces { force: [f1, f2], moment: [rr * (m1 - g_r1), rr * (m2 - g_r2)], energy }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn section() -> BeamSection {
        BeamSection::circular(0.05, 2000.0, 800.0)
    }

    #[test]
    fn rotation_log_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for scale in [1e-9, 1e-4, 0.5, 2.5] {
            let v = random_vec(&mut rng, scale);
            let m = *Rotation3::new(v).matrix();
            assert!((rotation_log(&m) - v).norm() < 1e-12 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn inverse_tangent_matches_numerical_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for scale in [1e-7, 0.3, 1.2] {
            let th = random_vec(&mut rng, scale);
            let r = Rotation3::new(th);
            let inv = inverse_tangent(&th);
            let h = 1e-7;
            for k in 0..3 {
                let mut w = Vector3::zeros();
                w[k] = h;
                let perturbed = Rotation3::new(w) * r;
                let dth = (rotation_log(perturbed.matrix()) - th) / h;
                assert!((dth - inv.column(k)).norm() < 1e-5, "scale {scale}, k {k}");
            }
        }
    }

    #[test]
    fn undeformed_element_is_force_free() {
        let a = Point3::new(0.1, 0.2, 0.3);
        let b = Point3::new(1.0, -0.5, 2.0);
        let el = BeamElement::new([0, 1], &a, &b);
        let i = Matrix3::identity();
        let f = element_forces(&el, &section(), [&a, &b], [&i, &i]);
        assert!(f.energy.abs() < 1e-20);
        for v in f.force.iter().chain(&f.moment) {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn rigid_motion_is_force_free() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(0.3, 0.4, 1.5);
        let el = BeamElement::new([0, 1], &a, &b);
        let q = Rotation3::new(Vector3::new(0.4, -1.1, 0.7));
        let shift = Vector3::new(3.0, 1.0, -2.0);
        let (a2, b2) = (q * a + shift, q * b + shift);
        let m = *q.matrix();
        let f = element_forces(&el, &section(), [&a2, &b2], [&m, &m]);
        assert!(f.energy.abs() < 1e-12);
        for v in f.force.iter().chain(&f.moment) {
            assert!(v.norm() < 1e-9);
        }
    }

    #[test]
    fn forces_are_the_gradient_of_the_strain_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sec = section();
        for _ in 0..20 {
            let a = Point3::origin() + random_vec(&mut rng, 0.2);
            let b = Point3::new(0.2, 0.5, 1.2) + random_vec(&mut rng, 0.2);
            let el = BeamElement::new([0, 1], &a, &b);
            let x = [a + random_vec(&mut rng, 0.05), b + random_vec(&mut rng, 0.05)];
            let r = [
                *Rotation3::new(random_vec(&mut rng, 0.3)).matrix(),
                *Rotation3::new(random_vec(&mut rng, 0.3)).matrix(),
            ];
            let f = element_forces(&el, &sec, [&x[0], &x[1]], [&r[0], &r[1]]);
            let energy = |x: &[Point3<f64>; 2], r: &[Matrix3<f64>; 2]| {
                element_forces(&el, &sec, [&x[0], &x[1]], [&r[0], &r[1]]).energy
            };
            let h = 1e-6;
            let scale = f.force.iter().chain(&f.moment).map(|v| v.norm()).fold(1e-9, f64::max);
            for node in 0..2 {
                for k in 0..3 {
                    let (mut xp, mut xm) = (x, x);
                    xp[node][k] += h;
                    xm[node][k] -= h;
                    let fd = (energy(&xp, &r) - energy(&xm, &r)) / (2.0 * h);
                    assert!((fd - f.force[node][k]).abs() < 1e-6 * scale, "force node {node} dof {k}");

                    let mut w = Vector3::zeros();
                    w[k] = h;
                    let (mut rp, mut rm) = (r, r);
                    rp[node] = Rotation3::new(w).matrix() * r[node];
                    rm[node] = Rotation3::new(-w).matrix() * r[node];
                    let fd = (energy(&x, &rp) - energy(&x, &rm)) / (2.0 * h);
                    assert!((fd - f.moment[node][k]).abs() < 1e-6 * scale, "moment node {node} dof {k}");
                }
            }
        }
    }

    #[test]
    fn small_bending_matches_linear_stiffness() {
        // clamped-free element rotated at the tip: M = 4EI/L·θ
        let a = Point3::origin();
        let b = Point3::new(0.0, 0.0, 2.0);
        let el = BeamElement::new([0, 1], &a, &b);
        let sec = section();
        let theta = 1e-6;
        let i = Matrix3::identity();
        let r = *Rotation3::new(Vector3::new(theta, 0.0, 0.0)).matrix();
        let f = element_forces(&el, &sec, [&a, &b], [&i, &r]);
        let expected = 4.0 * sec.bending / 2.0 * theta;
        assert!((f.moment[1].x - expected).abs() < 1e-6 * expected);
    }
}
