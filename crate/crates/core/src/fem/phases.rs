//! Crimping, positioning and deployment of a stent.

use std::time::Instant;

use log::debug;
use nalgebra::{Point3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::path::{interpolate_frames, project_centerline, CenterlinePath, PathFrame};
use super::solver::{
    relax, Contact, Integrator, NodeConstraint, Phase, RelaxOptions, RelaxReport, SimulationState, SolverConfig,
    Structure,
};
use crate::error::{Error, Result};
use crate::stent::{ring_centers, StentMesh};
use crate::vessel::{SignedDistance, VesselModel};

fn require_converged(report: RelaxReport, what: &str) -> Result<RelaxReport> {
    if report.converged {
        Ok(report)
    } else {
        debug!("{what} stopped at the step budget with kinetic energy {:e}", report.kinetic_energy);
        Err(Error::NonConvergence { steps: report.steps, kinetic_energy: report.kinetic_energy })
    }
}

/// Squeezes the stent radially to `cfg.r_crimped` over `cfg.crimp_ramp_steps`
/// time steps, then lets it settle. Circumferential motion is blocked, the axial coordinate and
/// the rotations relax, so the braid elongates.
pub fn crimp(structure: &Structure, mesh: &StentMesh, cfg: &SolverConfig) -> Result<SimulationState> {
    cfg.validate()?;
    let r0 = mesh.spec.node_radius();
    let r1 = cfg.r_crimped + mesh.spec.wire_radius;
    if r1 > r0 {
        return Err(Error::Config(format!(
            "crimped radius {} exceeds the stent radius {}",
            cfg.r_crimped, mesh.spec.stent_radius
        )));
    }
    let mut state = SimulationState::at_rest(structure);
    let angles: Vec<(f64, f64)> = structure
        .rest
        .iter()
        .map(|p| {
            let a = p.y.atan2(p.x);
            (a.cos(), a.sin())
        })
        .collect();
    // The radius is driven continuously; sudden jumps twist the light
    // rotational degrees of freedom past the range of the element kinematics.
    let mut integrator = Integrator::new(structure, cfg);
    let opts = RelaxOptions::default();
    for k in 1..=cfg.crimp_ramp_steps {
        let radius = r0 + (r1 - r0) * k as f64 / cfg.crimp_ramp_steps as f64;
        for (i, &(cos, sin)) in angles.iter().enumerate() {
            state.constraints[i] = NodeConstraint::Radial { radius, cos, sin };
        }
        integrator.step(&mut state, &opts)?;
    }
    require_converged(relax(structure, &mut state, cfg, &opts)?, "crimping")?;
    state.stop_motion();
    state.phase = Phase::Crimped;
    Ok(state)
}

/// Moves the crimped stent through the sequence of `frames`: the nodes of
/// ring `i` follow the rigid motion of path point `R_i` and of the ring
/// orientation, and the nodal rotations relax after every frame.
pub fn position(
    structure: &Structure,
    state: &mut SimulationState,
    rings: &[Vec<usize>],
    c0: &CenterlinePath,
    frames: &[PathFrame],
    cfg: &SolverConfig,
) -> Result<()> {
    if state.phase != Phase::Crimped {
        return Err(Error::State(format!("positioning needs a crimped stent, found {:?}", state.phase)));
    }
    if c0.points.len() != rings.len() {
        return Err(Error::Geometry(format!("path has {} points for {} rings", c0.points.len(), rings.len())));
    }
    let crimped = state.positions.clone();
    let mut previous: Vec<UnitQuaternion<f64>> = vec![UnitQuaternion::identity(); rings.len()];
    for (k, frame) in frames.iter().enumerate() {
        for (i, ring) in rings.iter().enumerate() {
            let q = frame.ring_rotation(i);
            let rq = UnitQuaternion::from_rotation_matrix(&q);
            let delta = rq * previous[i].inverse();
            previous[i] = rq;
            for &n in ring {
                let target = frame.path.points[i] + q * (crimped[n] - c0.points[i]);
                state.positions[n] = target;
                state.constraints[n] = NodeConstraint::Pinned(target);
                state.rotations[n] = delta * state.rotations[n];
            }
        }
        state.stop_motion();
        if k + 1 < frames.len() {
            let opts = RelaxOptions { max_steps: Some(cfg.position_relax_steps), ..Default::default() };
            relax(structure, state, cfg, &opts)?;
        } else {
            let report = relax(structure, state, cfg, &RelaxOptions::default())?;
            require_converged(report, "positioning")?;
        }
    }
    state.stop_motion();
    state.phase = Phase::Positioned;
    Ok(())
}

/// Releases every tie and relaxes against the wall. Returns the nodal
/// displacements from the undeformed lattice, `(u_x, u_y, u_z)` per node.
pub fn deploy(
    structure: &Structure,
    state: &mut SimulationState,
    surface: &dyn SignedDistance,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, RelaxReport)> {
    if state.phase != Phase::Positioned {
        return Err(Error::State(format!("deployment needs a positioned stent, found {:?}", state.phase)));
    }
    state.constraints.iter_mut().for_each(|c| *c = NodeConstraint::Free);
    let opts = RelaxOptions { contact: Some(Contact { surface }), ..Default::default() };
    let report = require_converged(relax(structure, state, cfg, &opts)?, "deployment")?;
    state.phase = Phase::Deployed;
    Ok((state.displacement(&structure.rest), report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub crimp_s: f64,
    pub position_s: f64,
    pub deploy_s: f64,
}

/// Everything a full crimp → position → deploy run produces.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub crimped: Vec<Point3<f64>>,
    pub positioned: Vec<Point3<f64>>,
    pub deployed: Vec<Point3<f64>>,
    pub c0: CenterlinePath,
    pub ct: CenterlinePath,
    pub u_h: Vec<f64>,
    pub report: RelaxReport,
    pub timings: PhaseTimings,
    pub total_steps: usize,
}

/// Ring centers of the crimped stent, i.e. the straight start path.
pub fn crimped_centerline(mesh: &StentMesh, crimped: &[Point3<f64>]) -> Result<CenterlinePath> {
    CenterlinePath::new(ring_centers(&mesh.rings, crimped)?)
}

/// A crimped stent ready to be positioned and deployed in any vessel. The
/// crimp does not depend on the vessel, so it is computed once.
#[derive(Debug, Clone)]
pub struct Deployer {
    pub mesh: StentMesh,
    pub structure: Structure,
    pub cfg: SolverConfig,
    crimped: SimulationState,
    c0: CenterlinePath,
    crimp_s: f64,
}

impl Deployer {
    pub fn new(mesh: StentMesh, cfg: SolverConfig) -> Result<Self> {
        let structure = Structure::from_stent(&mesh);
        let t0 = Instant::now();
        let crimped = crimp(&structure, &mesh, &cfg)?;
        let c0 = crimped_centerline(&mesh, &crimped.positions)?;
        Ok(Self { mesh, structure, cfg, crimped, c0, crimp_s: t0.elapsed().as_secs_f64() })
    }

    pub fn crimped(&self) -> &SimulationState {
        &self.crimped
    }

    /// Straight path through the ring centers of the crimped stent.
    pub fn crimped_path(&self) -> &CenterlinePath {
        &self.c0
    }

    /// Positions the crimped stent at `eta` along the vessel and deploys it.
    pub fn run(&self, vessel: &VesselModel, eta: f64) -> Result<Deployment> {
        let t1 = Instant::now();
        let mut state = self.crimped.clone();
        let ct = project_centerline(&self.c0, vessel, eta)?;
        let frames = interpolate_frames(&self.c0, &ct, self.cfg.n_position_steps)?;
        position(&self.structure, &mut state, &self.mesh.rings, &self.c0, &frames, &self.cfg)?;
        let positioned = state.positions.clone();
        let t2 = Instant::now();

        let (u_h, report) = deploy(&self.structure, &mut state, vessel, &self.cfg)?;
        let t3 = Instant::now();
        Ok(Deployment {
            crimped: self.crimped.positions.clone(),
            positioned,
            deployed: state.positions.clone(),
            c0: self.c0.clone(),
            ct,
            u_h,
            report,
            timings: PhaseTimings {
                crimp_s: self.crimp_s,
                position_s: (t2 - t1).as_secs_f64(),
                deploy_s: (t3 - t2).as_secs_f64(),
            },
            total_steps: state.steps,
        })
    }
}

/// Runs the three phases for one vessel and deployment site.
pub fn simulate_deployment(mesh: &StentMesh, vessel: &VesselModel, eta: f64, cfg: &SolverConfig) -> Result<Deployment> {
    Deployer::new(mesh.clone(), *cfg)?.run(vessel, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stent::{generate_stent, StentSpec};
    use crate::vessel::{VesselFrame, VesselParams};

    fn coarse() -> (StentMesh, Structure) {
        let mesh = generate_stent(&StentSpec::coarse()).unwrap();
        let s = Structure::from_stent(&mesh);
        (mesh, s)
    }

    #[test]
    fn crimp_imposes_the_radius_and_elongates() {
        let (mesh, s) = coarse();
        let cfg = SolverConfig::default();
        let state = crimp(&s, &mesh, &cfg).unwrap();
        let target = cfg.r_crimped + mesh.spec.wire_radius;
        for p in &state.positions {
            assert!(((p.x * p.x + p.y * p.y).sqrt() - target).abs() < 1e-6);
        }
        let c = ring_centers(&mesh.rings, &state.positions).unwrap();
        let span = c.last().unwrap().z - c[0].z;
        assert!(span >= mesh.spec.length);
        assert_eq!(state.phase, Phase::Crimped);
    }

    #[test]
    fn crimp_to_own_radius_is_identity() {
        let (mesh, s) = coarse();
        let cfg = SolverConfig { r_crimped: mesh.spec.stent_radius, crimp_ramp_steps: 1, ..Default::default() };
        let state = crimp(&s, &mesh, &cfg).unwrap();
        for (p, q) in state.positions.iter().zip(&mesh.nodes) {
            assert!((p - q).norm() < 1e-9);
        }
        let bad = SolverConfig { r_crimped: 0.0, ..Default::default() };
        assert!(matches!(crimp(&s, &mesh, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn positioning_in_a_straight_vessel_is_a_translation() {
        let (mesh, s) = coarse();
        let cfg = SolverConfig::default();
        let mut state = crimp(&s, &mesh, &cfg).unwrap();
        let crimped = state.positions.clone();
        let vessel = VesselModel::from_params(
            &VesselParams { y_p1: 0.0, z_p1: 10.0, d_v: 3.0, d_a: 6.0, y_ca: 20.0 },
            &VesselFrame::default(),
        )
        .unwrap();
        let c0 = crimped_centerline(&mesh, &crimped).unwrap();
        let ct = project_centerline(&c0, &vessel, 0.3).unwrap();
        let frames = interpolate_frames(&c0, &ct, 4).unwrap();
        position(&s, &mut state, &mesh.rings, &c0, &frames, &cfg).unwrap();
        let shift = ct.points[0] - c0.points[0];
        for (p, q) in state.positions.iter().zip(&crimped) {
            assert!((p - q - shift).norm() < 1e-6);
        }
        let again = position(&s, &mut state, &mesh.rings, &c0, &frames, &cfg);
        assert!(matches!(again, Err(Error::State(_))));
    }
}
