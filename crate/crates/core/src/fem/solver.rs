//! Explicit dynamic relaxation of a beam assembly.
//!
//! Translational and rotational velocities are advanced with a damped
//! central-difference scheme; the run stops once the kinetic energy has stayed
//! below the threshold for a few consecutive steps.

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::beam::{element_forces, BeamElement, BeamSection};
use crate::error::{Error, Result};
use crate::stent::{StentMesh, StentSpec};
use crate::vessel::SignedDistance;

/// Units: mm, N, s, tonne, hence energies in mJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Wall penalty per node [N/mm].
    pub k_contact: f64,
    /// Penalty spring between crossing wires [N/mm].
    pub k_cross: f64,
    /// Coulomb friction coefficient against the wall.
    pub mu_f: f64,
    /// Mass-proportional damping [1/s]; the starting value when
    /// `adaptive_damping` is on.
    pub c_damp: f64,
    /// Re-estimate the damping every step from the current motion.
    pub adaptive_damping: bool,
    /// Upper bound on the time step [s]; the stable step is used when smaller.
    pub dt: f64,
    /// Fraction of the estimated stable step actually taken.
    pub dt_safety: f64,
    /// Kinetic energy stop threshold [mJ].
    pub ke_stop: f64,
    /// Consecutive steps below `ke_stop` required to stop.
    pub ke_window: usize,
    /// Step budget of a single relaxation.
    pub max_steps: usize,
    /// Crimped stent radius [mm].
    pub r_crimped: f64,
    /// Time steps over which the crimping radius is ramped.
    pub crimp_ramp_steps: usize,
    pub n_position_steps: usize,
    /// Step budget of the rotation relaxation after each intermediate
    /// positioning frame; the last frame is always relaxed to rest.
    pub position_relax_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_contact: 0.1,
            k_cross: 1e-2,
            mu_f: 0.1,
            c_damp: 2.0e3,
            adaptive_damping: true,
            dt: 1e-6,
            dt_safety: 0.9,
            ke_stop: 1e-12,
            ke_window: 10,
            max_steps: 400_000,
            r_crimped: 0.45,
            crimp_ramp_steps: 5_000,
            n_position_steps: 20,
            position_relax_steps: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_contact", self.k_contact),
            ("k_cross", self.k_cross),
            ("c_damp", self.c_damp),
            ("dt", self.dt),
            ("dt_safety", self.dt_safety),
            ("ke_stop", self.ke_stop),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver {name} must be positive, got {v}")));
            }
        }
        if self.r_crimped <= 0.0 {
            return Err(Error::Config(format!("crimped radius must be positive, got {}", self.r_crimped)));
        }
        if self.mu_f < 0.0 {
            return Err(Error::Config("friction coefficient must be nonnegative".into()));
        }
        if self.dt_safety >= 1.0 {
            return Err(Error::Config("dt_safety must be below 1".into()));
        }
        if self.max_steps == 0 || self.ke_window == 0 || self.crimp_ramp_steps == 0 || self.n_position_steps == 0 {
            return Err(Error::Config("step counts must be positive".into()));
        }
        Ok(())
    }
}

/// Beam assembly with lumped masses.
#[derive(Debug, Clone)]
pub struct Structure {
    pub rest: Vec<Point3<f64>>,
    pub elements: Vec<BeamElement>,
    pub section: BeamSection,
    pub crossings: Vec<[usize; 2]>,
    pub wire_radius: f64,
    pub mass: Vec<f64>,
    /// Isotropic rotary inertia per node.
    pub inertia: Vec<f64>,
}

impl Structure {
    pub fn new(
        rest: Vec<Point3<f64>>,
        connectivity: &[[usize; 2]],
        crossings: Vec<[usize; 2]>,
        wire_radius: f64,
        youngs: f64,
        shear: f64,
        density: f64,
    ) -> Self {
        let section = BeamSection::circular(wire_radius, youngs, shear);
        let elements: Vec<BeamElement> =
            connectivity.iter().map(|&[a, b]| BeamElement::new([a, b], &rest[a], &rest[b])).collect();
        let mut mass = vec![0.0; rest.len()];
        let mut inertia = vec![0.0; rest.len()];
        for el in &elements {
            let half = 0.5 * el.rest_length;
            for &n in &el.nodes {
                mass[n] += density * section.area * half;
                inertia[n] += density * 2.0 * section.inertia * half;
            }
        }
        Self { rest, elements, section, crossings, wire_radius, mass, inertia }
    }

    pub fn from_stent(mesh: &StentMesh) -> Self {
        let spec: &StentSpec = &mesh.spec;
        Self::new(
            mesh.nodes.clone(),
            &mesh.beams,
            mesh.crossings.clone(),
            spec.wire_radius,
            spec.youngs_modulus_mpa(),
            spec.shear_modulus_mpa(),
            spec.density_t_per_mm3(),
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.rest.len()
    }

    /// Time step from a block-Gershgorin bound on the highest frequency of
    /// the linearized, mass-scaled stiffness (node blocks of translations and
    /// of rotations).
    pub fn stable_dt(&self, cfg: &SolverConfig) -> f64 {
        let sec = &self.section;
        let n = self.n_nodes();
        let mut trans_row = vec![0.0; n];
        let mut rot_row = vec![0.0; n];
        for el in &self.elements {
            let l = el.rest_length;
            let ei = sec.bending;
            let k_trans = (sec.axial / l).max(12.0 * ei / l.powi(3));
            let k_couple = 6.0 * ei / (l * l);
            let k_rot_self = (sec.torsion / l).max(4.0 * ei / l);
            let k_rot_other = (sec.torsion / l).max(2.0 * ei / l);
            let [a, b] = el.nodes;
            for (p, q) in [(a, b), (b, a)] {
                let (mp, mq, jp, jq) = (self.mass[p], self.mass[q], self.inertia[p], self.inertia[q]);
                trans_row[p] += k_trans / mp
                    + k_trans / (mp * mq).sqrt()
                    + k_couple / (mp * jp).sqrt()
                    + k_couple / (mp * jq).sqrt();
                rot_row[p] += k_rot_self / jp
                    + k_rot_other / (jp * jq).sqrt()
                    + k_couple / (jp * mp).sqrt()
                    + k_couple / (jp * mq).sqrt();
            }
        }
        for &[a, b] in &self.crossings {
            for (p, q) in [(a, b), (b, a)] {
                trans_row[p] += cfg.k_cross * (1.0 / self.mass[p] + 1.0 / (self.mass[p] * self.mass[q]).sqrt());
            }
        }
        let omega2 = (0..n).map(|i| (trans_row[i] + cfg.k_contact / self.mass[i]).max(rot_row[i])).fold(0.0, f64::max);
        (cfg.dt_safety * 2.0 / omega2.sqrt()).min(cfg.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Free,
    Crimped,
    Positioned,
    Deployed,
}

/// Kinematic condition on a node during a relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeConstraint {
    Free,
    /// Position prescribed, rotation free.
    Pinned(Point3<f64>),
    /// Position and rotation fixed.
    Clamped(Point3<f64>),
    /// In-plane position prescribed on a cylinder about z; axial coordinate
    /// and rotation free.
    Radial {
        radius: f64,
        cos: f64,
        sin: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub positions: Vec<Point3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    /// Nodal rotations relative to the undeformed configuration.
    pub rotations: Vec<UnitQuaternion<f64>>,
    pub angular_velocities: Vec<Vector3<f64>>,
    pub constraints: Vec<NodeConstraint>,
    /// Σ ½ m‖v‖² [mJ].
    pub kinetic_energy: f64,
    /// Σ ½ J‖ω‖² [mJ].
    pub rotational_energy: f64,
    pub phase: Phase,
    /// Total relaxation steps taken so far.
    pub steps: usize,
    /// Per-node cache for contact queries.
    contact_hints: Vec<usize>,
    /// Stick point of each node in contact when friction is active.
    friction_anchors: Vec<Option<Point3<f64>>>,
}

impl SimulationState {
    pub fn at_rest(structure: &Structure) -> Self {
        let n = structure.n_nodes();
        Self {
            positions: structure.rest.clone(),
            velocities: vec![Vector3::zeros(); n],
            rotations: vec![UnitQuaternion::identity(); n],
            angular_velocities: vec![Vector3::zeros(); n],
            constraints: vec![NodeConstraint::Free; n],
            kinetic_energy: 0.0,
            rotational_energy: 0.0,
            phase: Phase::Free,
            steps: 0,
            contact_hints: vec![0; n],
            friction_anchors: vec![None; n],
        }
    }

    pub fn stop_motion(&mut self) {
        self.velocities.iter_mut().for_each(|v| *v = Vector3::zeros());
        self.angular_velocities.iter_mut().for_each(|w| *w = Vector3::zeros());
        self.kinetic_energy = 0.0;
        self.rotational_energy = 0.0;
    }

    /// Displacements from `rest`, flattened as `(u_x, u_y, u_z)` per node.
    pub fn displacement(&self, rest: &[Point3<f64>]) -> Vec<f64> {
        self.positions.iter().zip(rest).flat_map(|(p, r)| (p - r).iter().copied().collect::<Vec<_>>()).collect()
    }
}

/// Contact surface seen by the wires.
#[derive(Clone, Copy)]
pub struct Contact<'a> {
    pub surface: &'a dyn SignedDistance,
}

#[derive(Default)]
pub struct RelaxOptions<'a> {
    pub contact: Option<Contact<'a>>,
    /// Constant nodal forces.
    pub loads: &'a [(usize, Vector3<f64>)],
    /// Overrides the configured step budget.
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxReport {
    pub steps: usize,
    pub kinetic_energy: f64,
    pub converged: bool,
}

/// Residual forces and moments at the current state, plus the elastic energy.
pub fn internal_state(
    structure: &Structure,
    state: &mut SimulationState,
    cfg: &SolverConfig,
    opts: &RelaxOptions<'_>,
    force: &mut [Vector3<f64>],
    moment: &mut [Vector3<f64>],
    rot: &mut [Matrix3<f64>],
) -> Result<f64> {
    for (r, q) in rot.iter_mut().zip(&state.rotations) {
        *r = *q.to_rotation_matrix().matrix();
    }
    force.iter_mut().for_each(|f| *f = Vector3::zeros());
    moment.iter_mut().for_each(|m| *m = Vector3::zeros());

    let mut energy = 0.0;
    for el in &structure.elements {
        let [a, b] = el.nodes;
        let f = element_forces(el, &structure.section, [&state.positions[a], &state.positions[b]], [&rot[a], &rot[b]]);
        force[a] -= f.force[0];
        force[b] -= f.force[1];
        moment[a] -= f.moment[0];
        moment[b] -= f.moment[1];
        energy += f.energy;
    }
    for &[a, b] in &structure.crossings {
        let d = state.positions[b] - state.positions[a];
        force[a] += cfg.k_cross * d;
        force[b] -= cfg.k_cross * d;
        energy += 0.5 * cfg.k_cross * d.norm_squared();
    }
    if let Some(contact) = opts.contact {
        for n in 0..structure.n_nodes() {
            let x = state.positions[n];
            let (dist, normal) = contact.surface.distance_and_normal(&x, &mut state.contact_hints[n])?;
            let gap = dist + structure.wire_radius;
            if gap <= 0.0 {
                state.friction_anchors[n] = None;
                continue;
            }
            let normal_force = cfg.k_contact * gap;
            force[n] -= normal * normal_force;
            energy += 0.5 * cfg.k_contact * gap * gap;
            if cfg.mu_f > 0.0 {
                // Tangential spring towards the stick point; the point slides
                // along once the spring force exceeds the Coulomb limit.
                let anchor = state.friction_anchors[n].get_or_insert(x);
                let slip = x - *anchor;
                let slip_t = slip - normal * normal.dot(&slip);
                let limit = cfg.mu_f * normal_force;
                let mut stick = cfg.k_contact * slip_t;
                let magnitude = stick.norm();
                if magnitude > limit {
                    stick *= limit / magnitude;
                    *anchor = x - stick / cfg.k_contact;
                }
                force[n] -= stick;
            }
        }
    }
    for &(n, f) in opts.loads {
        force[n] += f;
        energy -= f.dot(&(state.positions[n] - structure.rest[n]));
    }
    Ok(energy)
}

/// One damped explicit time step at a time; holds the step size and the
/// scratch buffers so that callers can drive prescribed motions themselves.
pub struct Integrator<'s> {
    structure: &'s Structure,
    cfg: &'s SolverConfig,
    dt: f64,
    damping: f64,
    force: Vec<Vector3<f64>>,
    moment: Vec<Vector3<f64>>,
    previous: Option<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)>,
    rot: Vec<Matrix3<f64>>,
}

impl<'s> Integrator<'s> {
    pub fn new(structure: &'s Structure, cfg: &'s SolverConfig) -> Self {
        let n = structure.n_nodes();
        let dt = structure.stable_dt(cfg);
        Self {
            structure,
            cfg,
            dt,
            damping: cfg.c_damp,
            force: vec![Vector3::zeros(); n],
            moment: vec![Vector3::zeros(); n],
            previous: None,
            rot: vec![Matrix3::zeros(); n],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Current mass-proportional damping coefficient [1/s].
    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Critical damping of the mode the structure is currently moving in,
    /// from the Rayleigh quotient of the force change over the last
    /// increment. Keeps the previous value when the quotient is not positive.
    fn update_damping(&mut self, state: &SimulationState) {
        let structure = self.structure;
        if let Some((force, moment)) = &self.previous {
            let mut stiffness = 0.0;
            let mut mass = 0.0;
            for i in 0..structure.n_nodes() {
                let (v, w) = (state.velocities[i], state.angular_velocities[i]);
                stiffness -= (self.force[i] - force[i]).dot(&v) + (self.moment[i] - moment[i]).dot(&w);
                mass += structure.mass[i] * v.norm_squared() + structure.inertia[i] * w.norm_squared();
            }
            // both sums carry one factor dt per velocity
            if mass > 0.0 && stiffness > 0.0 {
                let omega2 = stiffness / (mass * self.dt);
                self.damping = (2.0 * omega2.sqrt()).min(1.0 / self.dt);
            }
        }
        match &mut self.previous {
            Some((f, m)) => {
                f.copy_from_slice(&self.force);
                m.copy_from_slice(&self.moment);
            }
            None => self.previous = Some((self.force.clone(), self.moment.clone())),
        }
    }

    /// Advances one step and returns the total kinetic energy.
    pub fn step(&mut self, state: &mut SimulationState, opts: &RelaxOptions<'_>) -> Result<f64> {
        let structure = self.structure;
        let dt = self.dt;
        internal_state(structure, state, self.cfg, opts, &mut self.force, &mut self.moment, &mut self.rot)?;

        if self.cfg.adaptive_damping {
            self.update_damping(state);
        }
        let damp_old = 1.0 - 0.5 * self.damping * dt;
        let damp_new = 1.0 / (1.0 + 0.5 * self.damping * dt);

        let mut ke = 0.0;
        let mut ke_rot = 0.0;
        for i in 0..structure.n_nodes() {
            let mut v = (state.velocities[i] * damp_old + self.force[i] * (dt / structure.mass[i])) * damp_new;
            let mut w =
                (state.angular_velocities[i] * damp_old + self.moment[i] * (dt / structure.inertia[i])) * damp_new;
            match state.constraints[i] {
                NodeConstraint::Free => {}
                NodeConstraint::Pinned(_) => v = Vector3::zeros(),
                NodeConstraint::Clamped(_) => {
                    v = Vector3::zeros();
                    w = Vector3::zeros();
                }
                NodeConstraint::Radial { .. } => {
                    v.x = 0.0;
                    v.y = 0.0;
                }
            }
            state.velocities[i] = v;
            state.angular_velocities[i] = w;
            state.positions[i] += v * dt;
            match state.constraints[i] {
                NodeConstraint::Pinned(p) | NodeConstraint::Clamped(p) => state.positions[i] = p,
                NodeConstraint::Radial { radius, cos, sin } => {
                    state.positions[i].x = radius * cos;
                    state.positions[i].y = radius * sin;
                }
                NodeConstraint::Free => {}
            }
            if w != Vector3::zeros() {
                let q = UnitQuaternion::from_scaled_axis(w * dt) * state.rotations[i];
                state.rotations[i] = UnitQuaternion::new_normalize(q.into_inner());
            }
            ke += 0.5 * structure.mass[i] * v.norm_squared();
            ke_rot += 0.5 * structure.inertia[i] * w.norm_squared();
        }
        state.kinetic_energy = ke;
        state.rotational_energy = ke_rot;
        state.steps += 1;

        let total = ke + ke_rot;
        if !total.is_finite() {
            return Err(Error::Numerical(format!("kinetic energy became {total} after {} steps", state.steps)));
        }
        Ok(total)
    }
}

/// Runs damped pseudo-dynamics from the current state until the kinetic
/// energy stays below `cfg.ke_stop` for `cfg.ke_window` steps.
pub fn relax(
    structure: &Structure,
    state: &mut SimulationState,
    cfg: &SolverConfig,
    opts: &RelaxOptions<'_>,
) -> Result<RelaxReport> {
    let max_steps = opts.max_steps.unwrap_or(cfg.max_steps);
    let mut integrator = Integrator::new(structure, cfg);
    let mut quiet = 0;
    let mut total = 0.0;
    for step in 1..=max_steps {
        total = integrator.step(state, opts)?;
        if total < cfg.ke_stop {
            quiet += 1;
            if quiet >= cfg.ke_window {
                return Ok(RelaxReport { steps: step, kinetic_energy: total, converged: true });
            }
        } else {
            quiet = 0;
        }
    }
    Ok(RelaxReport { steps: max_steps, kinetic_energy: total, converged: false })
}
