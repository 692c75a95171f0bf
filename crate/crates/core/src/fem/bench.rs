//! Reference problems with known answers for the deployment solver.

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use super::phases::Deployer;
use super::solver::{relax, NodeConstraint, RelaxOptions, SimulationState, SolverConfig, Structure};
use crate::error::{Error, Result};
use crate::vessel::{BezierCenterline, SignedDistance, VesselModel};

/// Straight wire along z, clamped at z = 0.
#[derive(Debug, Clone, Copy)]
pub struct Cantilever {
    pub length: f64,
    pub wire_radius: f64,
    /// [MPa]
    pub youngs: f64,
    pub poisson_ratio: f64,
    /// [t/mm³]
    pub density: f64,
    pub n_elements: usize,
}

impl Default for Cantilever {
    fn default() -> Self {
        Self { length: 10.0, wire_radius: 0.1, youngs: 225e3, poisson_ratio: 0.33, density: 9.13e-9, n_elements: 20 }
    }
}

impl Cantilever {
    pub fn structure(&self) -> Result<Structure> {
        if self.n_elements == 0 || !(self.length > 0.0) || !(self.wire_radius > 0.0) {
            return Err(Error::Config("cantilever needs positive length, radius and element count".into()));
        }
        let n = self.n_elements;
        let nodes = (0..=n).map(|i| Point3::new(0.0, 0.0, self.length * i as f64 / n as f64)).collect();
        let conn: Vec<[usize; 2]> = (0..n).map(|i| [i, i + 1]).collect();
        let shear = self.youngs / (2.0 * (1.0 + self.poisson_ratio));
        Ok(Structure::new(nodes, &conn, vec![], self.wire_radius, self.youngs, shear, self.density))
    }

    /// Linear tip deflection under a transverse tip load, P·L³/(3·E·I).
    pub fn analytical_deflection(&self, tip_load: f64) -> f64 {
        let inertia = 0.25 * std::f64::consts::PI * self.wire_radius.powi(4);
        tip_load * self.length.powi(3) / (3.0 * self.youngs * inertia)
    }
}

/// Tip deflection along x of the relaxed cantilever under a tip load along x.
pub fn beam_bench_cantilever(bench: &Cantilever, tip_load: f64, cfg: &SolverConfig) -> Result<f64> {
    let structure = bench.structure()?;
    let mut state = SimulationState::at_rest(&structure);
    state.constraints[0] = NodeConstraint::Clamped(structure.rest[0]);
    let tip = bench.n_elements;
    let loads = [(tip, Vector3::new(tip_load, 0.0, 0.0))];
    let report = relax(&structure, &mut state, cfg, &RelaxOptions { loads: &loads, ..Default::default() })?;
    if !report.converged {
        return Err(Error::NonConvergence { steps: report.steps, kinetic_energy: report.kinetic_energy });
    }
    Ok(state.positions[tip].x - structure.rest[tip].x)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionBench {
    /// Largest deviation of a node from the expected radius [mm].
    pub max_radial_error: f64,
    /// Largest wall penetration `sdf + R_w` over nodes in contact [mm].
    pub max_penetration: f64,
    pub nodes_in_contact: usize,
    pub steps: usize,
}

/// Straight tube of diameter `d_v` along z long enough for the crimped stent.
pub fn straight_tube(d_v: f64, length: f64) -> Result<VesselModel> {
    let centerline = BezierCenterline::new(
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(0.0, 0.0, 0.5 * length),
        Point3::new(0.0, 0.0, length),
    )?;
    // the sphere sits far away so that only the tube is seen
    let c_a = Point3::new(0.0, 1e3, 0.5 * length);
    VesselModel::new(centerline, d_v, 1.0, c_a, 200, length)
}

/// Deploys the crimped stent of `deployer` in a straight tube of diameter
/// `d_v`. With a tube wider than the stent the nodes must return to the
/// free radius; with a narrower one they must rest on the wall.
pub fn expansion_bench(deployer: &Deployer, d_v: f64) -> Result<ExpansionBench> {
    let spec = &deployer.mesh.spec;
    let tube = straight_tube(d_v, 3.0 * spec.length)?;
    let deployment = deployer.run(&tube, 0.5)?;
    let free = spec.node_radius();
    let expected = free.min(0.5 * d_v - spec.wire_radius);
    let axis = &deployment.ct;
    let start = axis.points[0];
    let dir = (axis.points[axis.points.len() - 1] - start).normalize();
    let mut max_radial_error: f64 = 0.0;
    let mut max_penetration: f64 = 0.0;
    let mut nodes_in_contact = 0;
    for p in &deployment.deployed {
        let rel = p - start;
        let radial = (rel - dir * dir.dot(&rel)).norm();
        max_radial_error = max_radial_error.max((radial - expected).abs());
        let gap = tube.signed_distance(p) + spec.wire_radius;
        if gap > 0.0 {
            nodes_in_contact += 1;
            max_penetration = max_penetration.max(gap);
        }
    }
    Ok(ExpansionBench { max_radial_error, max_penetration, nodes_in_contact, steps: deployment.report.steps })
}
