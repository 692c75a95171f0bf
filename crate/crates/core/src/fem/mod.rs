//! Quasi-static deployment of a braided stent by dynamic relaxation.

mod beam;
mod bench;
mod path;
mod phases;
mod solver;

pub use beam::{element_forces, BeamElement, BeamSection, ElementForces};
pub use bench::{beam_bench_cantilever, expansion_bench, straight_tube, Cantilever, ExpansionBench};
pub use path::{
    cumulative_rotations, interpolate_frames, interpolate_path, project_centerline, segment_rotations, straighten,
    CenterlinePath, PathFrame, SegmentRotation,
};
pub use phases::{
    crimp, crimped_centerline, deploy, position, simulate_deployment, Deployer, Deployment, PhaseTimings,
};
pub use solver::{
    internal_state, relax, Contact, Integrator, NodeConstraint, Phase, RelaxOptions, RelaxReport, SimulationState,
    SolverConfig, Structure,
};
