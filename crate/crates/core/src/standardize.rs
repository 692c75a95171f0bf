//! Column standardization of design matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Per-column affine map to zero mean and unit standard deviation.
/// Constant columns keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
        let scale = x
            .column_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 * (1.0 + m.abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| v * s + m).collect()
    }

    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_moments() {
        let x = DMatrix::from_fn(6, 3, |i, j| (i as f64 - 2.0) * (j as f64 + 0.5) + 7.0 * j as f64);
        let s = Standardizer::fit(&x);
        let z = s.apply_rows(&x);
        for c in z.column_iter() {
            assert!(c.sum().abs() < 1e-12);
            assert!((c.norm_squared() / 6.0 - 1.0).abs() < 1e-12);
        }
        for i in 0..6 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let back = s.invert(&s.apply(&row));
            assert!(row.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let x = DMatrix::from_element(4, 1, 3.0);
        let s = Standardizer::fit(&x);
        assert_eq!(s.scale, vec![1.0]);
        assert_eq!(s.apply(&[3.0]), vec![0.0]);
    }
}
