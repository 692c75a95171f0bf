//! Braided-stent lattice: two opposite-handed families of helical wires.

use std::io::{self, Write};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{write_polydata, Cells, PointData};

/// Geometry and material of a braided stent.
///
/// Material properties are given in the usual engineering units; the solver
/// works in mm, N, s and tonnes, see [`StentSpec::youngs_modulus_mpa`] and
/// [`StentSpec::density_t_per_mm3`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StentSpec {
    pub n_wires: usize,
    /// Stent radius [mm].
    pub stent_radius: f64,
    /// Wire cross-section radius [mm].
    pub wire_radius: f64,
    /// Free length [mm].
    pub length: f64,
    pub n_cells: usize,
    /// Young's modulus [GPa].
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Density [kg/m³].
    pub density: f64,
}

impl Default for StentSpec {
    fn default() -> Self {
        // Phynox wires
        Self {
            n_wires: 48,
            stent_radius: 2.6,
            wire_radius: 0.014,
            length: 15.0,
            n_cells: 70,
            youngs_modulus: 225.0,
            poisson_ratio: 0.33,
            density: 9.13e3,
        }
    }
}

impl StentSpec {
    /// The 16-wire, 20-cell device used for desk-scale campaigns.
    pub fn coarse() -> Self {
        Self { n_wires: 16, n_cells: 20, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_wires < 4 || !self.n_wires.is_multiple_of(2) {
            return Err(Error::Config(format!("wire count must be even and at least 4, got {}", self.n_wires)));
        }
        if self.n_cells < 1 {
            return Err(Error::Config("stent needs at least one cell".into()));
        }
        let positive = [
            ("stent_radius", self.stent_radius),
            ("wire_radius", self.wire_radius),
            ("length", self.length),
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::Config(format!("Poisson ratio must lie in (0, 0.5), got {}", self.poisson_ratio)));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_wires * (self.n_cells + 1)
    }

    pub fn n_beams(&self) -> usize {
        self.n_wires * self.n_cells
    }

    /// Radius of the cylinder carrying the wire axes.
    pub fn node_radius(&self) -> f64 {
        self.stent_radius + self.wire_radius
    }

    pub fn youngs_modulus_mpa(&self) -> f64 {
        self.youngs_modulus * 1e3
    }

    pub fn shear_modulus_mpa(&self) -> f64 {
        self.youngs_modulus_mpa() / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn density_t_per_mm3(&self) -> f64 {
        self.density * 1e-12
    }

    pub fn node_index(&self, family: WireFamily, wire: usize, station: usize) -> usize {
        let half = self.n_wires / 2;
        (family.offset() * half + wire) * (self.n_cells + 1) + station
    }
}

/// Handedness of a helical wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireFamily {
    Right,
    Left,
}

impl WireFamily {
    fn orient(self) -> f64 {
        match self {
            WireFamily::Right => 1.0,
            WireFamily::Left => -1.0,
        }
    }

    fn offset(self) -> usize {
        match self {
            WireFamily::Right => 0,
            WireFamily::Left => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StentMesh {
    pub spec: StentSpec,
    pub nodes: Vec<Point3<f64>>,
    pub beams: Vec<[usize; 2]>,
    /// Coincident nodes of opposite-handed wires, `[right, left]`.
    pub crossings: Vec<[usize; 2]>,
    /// Node groups sharing an axial station, ordered by station.
    pub rings: Vec<Vec<usize>>,
}

/// Builds the undeformed lattice.
///
/// Wire `n` of each family starts at angle `n·dθ` with `dθ = 2π/(N_w/2)` and
/// advances by `±dθ` per cell while the axial coordinate grows by
/// `L_s/N_cells`. Nodes are numbered wire by wire: all right-handed wires
/// first, then the left-handed ones.
pub fn generate_stent(spec: &StentSpec) -> Result<StentMesh> {
    spec.validate()?;
    let half = spec.n_wires / 2;
    let d_theta = std::f64::consts::TAU / half as f64;
    let radius = spec.node_radius();
    let dz = spec.length / spec.n_cells as f64;

    let mut nodes = Vec::with_capacity(spec.n_nodes());
    let mut beams = Vec::with_capacity(spec.n_beams());
    for family in [WireFamily::Right, WireFamily::Left] {
        for n in 0..half {
            let start = n as f64 * d_theta;
            for i in 0..=spec.n_cells {
                let angle = family.orient() * i as f64 * d_theta + start;
                nodes.push(Point3::new(radius * angle.cos(), radius * angle.sin(), i as f64 * dz));
                if i > 0 {
                    let k = nodes.len() - 1;
                    beams.push([k - 1, k]);
                }
            }
        }
    }

    // Right wire n at station i sits at angle (n+i)·dθ, left wire m at
    // (m−i)·dθ, so they meet for m = n + 2i (mod N_w/2).
    let mut crossings = Vec::with_capacity(half * (spec.n_cells + 1));
    for n in 0..half {
        for i in 0..=spec.n_cells {
            let m = (n + 2 * i) % half;
            crossings.push([spec.node_index(WireFamily::Right, n, i), spec.node_index(WireFamily::Left, m, i)]);
        }
    }

    let rings = (0..=spec.n_cells)
        .map(|i| {
            let mut ring = Vec::with_capacity(spec.n_wires);
            for family in [WireFamily::Right, WireFamily::Left] {
                for n in 0..half {
                    ring.push(spec.node_index(family, n, i));
                }
            }
            ring
        })
        .collect();

    Ok(StentMesh { spec: *spec, nodes, beams, crossings, rings })
}

impl StentMesh {
    pub fn ring_centers(&self) -> Result<Vec<Point3<f64>>> {
        ring_centers(&self.rings, &self.nodes)
    }

    /// Nodes of the first and last rings.
    pub fn extremity_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let last = self.rings.len() - 1;
        self.rings[0].iter().chain(self.rings[last].iter()).copied()
    }

    /// Legacy-VTK line cells at `positions`, with displacements from the
    /// undeformed lattice attached as point data.
    pub fn write_vtk<W: Write>(&self, w: W, title: &str, positions: &[Point3<f64>]) -> io::Result<()> {
        let disp: Vec<Vector3<f64>> = positions.iter().zip(&self.nodes).map(|(p, x)| p - x).collect();
        write_polydata(w, title, positions, Cells::Lines(&self.beams), &[PointData::Vectors("displacement", &disp)])
    }
}

/// Arithmetic mean of each ring's nodes.
pub fn ring_centers(rings: &[Vec<usize>], positions: &[Point3<f64>]) -> Result<Vec<Point3<f64>>> {
    rings
        .iter()
        .enumerate()
        .map(|(i, ring)| {
            if ring.is_empty() {
                return Err(Error::Geometry(format!("ring {i} is empty")));
            }
            let sum = ring.iter().fold(Vector3::zeros(), |acc, &k| acc + positions[k].coords);
            Ok(Point3::from(sum / ring.len() as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_lattice_counts() {
        let spec = StentSpec { n_wires: 4, n_cells: 1, ..StentSpec::default() };
        let mesh = generate_stent(&spec).unwrap();
        assert_eq!(mesh.nodes.len(), 8);
        assert_eq!(mesh.beams.len(), 4);
        assert_eq!(mesh.rings.len(), 2);
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            StentSpec { n_wires: 5, ..StentSpec::default() },
            StentSpec { n_wires: 2, ..StentSpec::default() },
            StentSpec { poisson_ratio: 0.5, ..StentSpec::default() },
            StentSpec { wire_radius: 0.0, ..StentSpec::default() },
        ] {
            assert!(matches!(generate_stent(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn crossings_are_coincident_and_cover_every_node_once() {
        let mesh = generate_stent(&StentSpec::coarse()).unwrap();
        let mut seen = vec![0u8; mesh.nodes.len()];
        for &[a, b] in &mesh.crossings {
            assert!((mesh.nodes[a] - mesh.nodes[b]).norm() < 1e-9);
            seen[a] += 1;
            seen[b] += 1;
        }
        // extremity nodes pair up as well
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn crossings_match_brute_force_coincidence() {
        let spec = StentSpec { n_wires: 12, n_cells: 7, ..StentSpec::default() };
        let mesh = generate_stent(&spec).unwrap();
        let half = mesh.nodes.len() / 2;
        let mut brute = Vec::new();
        for a in 0..half {
            for b in half..mesh.nodes.len() {
                if (mesh.nodes[a] - mesh.nodes[b]).norm() < 1e-9 {
                    brute.push([a, b]);
                }
            }
        }
        let mut ours = mesh.crossings.clone();
        ours.sort();
        assert_eq!(ours, brute);
    }

    #[test]
    fn wire_centerline_length_equals_stent_length() {
        let mesh = generate_stent(&StentSpec::coarse()).unwrap();
        let centers = mesh.ring_centers().unwrap();
        let len: f64 = centers.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        assert!((len - mesh.spec.length).abs() < 1e-12);
        for (i, c) in centers.iter().enumerate() {
            assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12);
            assert!((c.z - i as f64 * 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_centers_follow_translation_and_averaging() {
        let mesh = generate_stent(&StentSpec::coarse()).unwrap();
        let shift = Vector3::new(1.0, -2.0, 0.5);
        let moved: Vec<_> = mesh.nodes.iter().map(|p| p + shift).collect();
        let a = mesh.ring_centers().unwrap();
        let b = ring_centers(&mesh.rings, &moved).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q - p - shift).norm() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut jittered = mesh.nodes.clone();
        for p in &mut jittered {
            *p += Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        }
        let ring = &mesh.rings[3];
        let mut sum = Vector3::zeros();
        for &k in ring {
            sum += jittered[k].coords;
        }
        let c = ring_centers(&mesh.rings, &jittered).unwrap()[3];
        assert!((c.coords - sum / ring.len() as f64).norm() < 1e-12);

        assert!(ring_centers(&[vec![]], &jittered).is_err());
    }

    #[test]
    fn vtk_export_carries_displacements() {
        let mesh = generate_stent(&StentSpec { n_wires: 4, n_cells: 1, ..StentSpec::default() }).unwrap();
        let mut buf = Vec::new();
        mesh.write_vtk(&mut buf, "stent", &mesh.nodes).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("LINES 4 12"));
        assert!(text.contains("VECTORS displacement double"));
    }
}
