//! Nodal and aggregate errors between high-fidelity, projected and
//! predicted displacements.

use std::fmt::Write as _;
use std::io::{self, Write};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use stentrom::mesh::{write_polydata, Cells, PointData};
use stentrom::stent::StentMesh;
use stentrom::{Error, Result};

/// Image resolution of common modalities [mm].
pub const IMAGING_THRESHOLDS: [(&str, f64); 4] = [("3DRA", 0.15), ("DSA", 0.2), ("CTA", 0.4), ("MRA", 0.6)];

/// Per-node errors of one solution [mm].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalErrors {
    /// Reduction error `‖u_rb − u_h‖`.
    pub e_rb: Vec<f64>,
    /// Prediction error `‖u_p − u_h‖`.
    pub e_p: Vec<f64>,
    /// `E_p − E_rb`, signed.
    pub e_gpr: Vec<f64>,
}

fn node_distance(a: &[f64], b: &[f64], i: usize) -> f64 {
    let d = Vector3::new(a[3 * i] - b[3 * i], a[3 * i + 1] - b[3 * i + 1], a[3 * i + 2] - b[3 * i + 2]);
    d.norm()
}

pub fn nodal_errors(u_h: &[f64], u_rb: &[f64], u_p: &[f64]) -> Result<NodalErrors> {
    if !u_h.len().is_multiple_of(3) {
        return Err(Error::Argument(format!("displacement length {} is not a multiple of 3", u_h.len())));
    }
    for other in [u_rb, u_p] {
        if other.len() != u_h.len() {
            return Err(Error::Dimension { expected: u_h.len(), actual: other.len() });
        }
    }
    let n = u_h.len() / 3;
    let e_rb: Vec<f64> = (0..n).map(|i| node_distance(u_rb, u_h, i)).collect();
    let e_p: Vec<f64> = (0..n).map(|i| node_distance(u_p, u_h, i)).collect();
    let e_gpr = e_p.iter().zip(&e_rb).map(|(p, r)| p - r).collect();
    Ok(NodalErrors { e_rb, e_p, e_gpr })
}

/// Average and maximum over the nodes of one solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionErrors {
    pub ae_rb: f64,
    pub me_rb: f64,
    pub ae_p: f64,
    pub me_p: f64,
    pub ae_gpr: f64,
    pub abs_ae_gpr: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl NodalErrors {
    pub fn summary(&self) -> Result<SolutionErrors> {
        if self.e_p.is_empty() {
            return Err(Error::Data("solution without nodes".into()));
        }
        Ok(SolutionErrors {
            ae_rb: mean(&self.e_rb),
            me_rb: max(&self.e_rb),
            ae_p: mean(&self.e_p),
            me_p: max(&self.e_p),
            ae_gpr: mean(&self.e_gpr),
            abs_ae_gpr: self.e_gpr.iter().map(|v| v.abs()).sum::<f64>() / self.e_gpr.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(v: &[f64]) -> Self {
        let m = mean(v);
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, sd }
    }
}

/// Number of solutions whose prediction error exceeds a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub ae_p_above: usize,
    pub me_p_above: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n_solutions: usize,
    pub ae_rb: MeanSd,
    pub me_rb: MeanSd,
    pub ae_p: MeanSd,
    pub me_p: MeanSd,
    pub ae_gpr: MeanSd,
    pub abs_ae_gpr: MeanSd,
    pub exceedances: Vec<Exceedance>,
    pub solutions: Vec<SolutionErrors>,
}

/// Dataset-level means and spreads, and threshold exceedance counts.
pub fn aggregate(reports: &[NodalErrors], thresholds: &[f64]) -> Result<ErrorSummary> {
    if reports.is_empty() {
        return Err(Error::Data("no solutions to aggregate".into()));
    }
    let solutions: Vec<SolutionErrors> = reports.iter().map(NodalErrors::summary).collect::<Result<_>>()?;
    let field = |f: fn(&SolutionErrors) -> f64| MeanSd::of(&solutions.iter().map(f).collect::<Vec<_>>());
    let exceedances = thresholds
        .iter()
        .map(|&t| Exceedance {
            threshold: t,
            ae_p_above: solutions.iter().filter(|s| s.ae_p > t).count(),
            me_p_above: solutions.iter().filter(|s| s.me_p > t).count(),
        })
        .collect();
    Ok(ErrorSummary {
        n_solutions: solutions.len(),
        ae_rb: field(|s| s.ae_rb),
        me_rb: field(|s| s.me_rb),
        ae_p: field(|s| s.ae_p),
        me_p: field(|s| s.me_p),
        ae_gpr: field(|s| s.ae_gpr),
        abs_ae_gpr: field(|s| s.abs_ae_gpr),
        exceedances,
        solutions,
    })
}

pub fn default_thresholds() -> Vec<f64> {
    IMAGING_THRESHOLDS.iter().map(|&(_, t)| t).collect()
}

impl ErrorSummary {
    /// Plain-text table, one row per measure.
    pub fn to_table(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title} ({} solutions)", self.n_solutions);
        let _ = writeln!(s, "{:<10} {:>12} {:>12}", "measure", "mean [mm]", "sd [mm]");
        for (name, v) in [
            ("AE_rb", self.ae_rb),
            ("ME_rb", self.me_rb),
            ("AE_p", self.ae_p),
            ("ME_p", self.me_p),
            ("AE_gpr", self.ae_gpr),
            ("|AE_gpr|", self.abs_ae_gpr),
        ] {
            let _ = writeln!(s, "{name:<10} {:>12.5} {:>12.5}", v.mean, v.sd);
        }
        let _ = writeln!(s, "{:<10} {:>12} {:>12}", "threshold", "AE_p above", "ME_p above");
        for e in &self.exceedances {
            let _ = writeln!(s, "{:<10.3} {:>12} {:>12}", e.threshold, e.ae_p_above, e.me_p_above);
        }
        s
    }
}

/// Legacy VTK of the stent at `positions` with the nodal errors attached.
pub fn write_error_vtk<W: Write>(
    w: W,
    mesh: &StentMesh,
    positions: &[Point3<f64>],
    errors: &NodalErrors,
) -> io::Result<()> {
    write_polydata(
        w,
        "nodal errors",
        positions,
        Cells::Lines(&mesh.beams),
        &[
            PointData::Scalars("E_rb", &errors.e_rb),
            PointData::Scalars("E_p", &errors.e_p),
            PointData::Scalars("E_gpr", &errors.e_gpr),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_prediction_has_zero_error() {
        let u = [1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        let e = nodal_errors(&u, &u, &u).unwrap();
        assert_eq!(e.e_p, vec![0.0, 0.0]);
        let rb = [1.0, 2.0, 3.0, -1.0, 0.5, 1.0];
        let e = nodal_errors(&u, &u, &rb).unwrap();
        assert_eq!(e.e_gpr, e.e_p);
    }

    #[test]
    fn three_four_five() {
        let u_h = [0.0; 3];
        let u_p = [3e-3, 4e-3, 0.0];
        let e = nodal_errors(&u_h, &u_h, &u_p).unwrap();
        assert!((e.e_p[0] - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn length_checks() {
        assert!(nodal_errors(&[0.0; 4], &[0.0; 4], &[0.0; 4]).is_err());
        assert!(matches!(nodal_errors(&[0.0; 3], &[0.0; 6], &[0.0; 3]), Err(Error::Dimension { .. })));
        assert!(aggregate(&[], &[0.1]).is_err());
    }

    #[test]
    fn uniform_error_and_thresholds() {
        let uniform = NodalErrors { e_rb: vec![0.0; 4], e_p: vec![0.3; 4], e_gpr: vec![0.3; 4] };
        let s = aggregate(std::slice::from_ref(&uniform), &default_thresholds()).unwrap();
        assert_eq!(s.ae_p.mean, 0.3);
        assert_eq!(s.me_p.mean, 0.3);
        assert_eq!(s.ae_p.sd, 0.0);
        let counts: Vec<usize> = s.exceedances.iter().map(|e| e.me_p_above).collect();
        assert_eq!(counts, vec![1, 1, 0, 0]);

        let peak = NodalErrors { e_rb: vec![0.0; 2], e_p: vec![0.16, 0.0], e_gpr: vec![0.16, 0.0] };
        let s = aggregate(&[peak], &[0.15, 0.2]).unwrap();
        assert_eq!((s.exceedances[0].me_p_above, s.exceedances[1].me_p_above), (1, 0));
        assert!(s.to_table("test").contains("AE_p"));
    }
}
