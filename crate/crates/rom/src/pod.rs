//! Proper orthogonal decomposition of a snapshot matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use stentrom::{Error, Result};

/// How the retained rank follows from the tolerance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Smallest L whose singular values sum to at least `1 − eps` of the total.
    #[default]
    SingularValue,
    /// Same on squared singular values (captured energy).
    Energy,
}

impl Truncation {
    pub fn tag(self) -> u64 {
        match self {
            Truncation::SingularValue => 0,
            Truncation::Energy => 1,
        }
    }

    pub fn from_tag(tag: u64) -> Result<Self> {
        match tag {
            0 => Ok(Truncation::SingularValue),
            1 => Ok(Truncation::Energy),
            t => Err(Error::Format(format!("unknown truncation tag {t}"))),
        }
    }
}

/// Left singular vectors of the snapshots, all numerically nonzero ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PodDecomposition {
    modes: DMatrix<f64>,
    /// Every singular value, sorted descending.
    pub singular_values: DVector<f64>,
    tolerance: f64,
}

/// Orthonormal basis of the retained modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    /// `N_h × L`.
    pub modes: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub eps_pod: f64,
    pub truncation: Truncation,
}

/// Singular values at or below this are treated as zero.
fn rank_tolerance(sv: &[f64], rows: usize, cols: usize) -> f64 {
    sv.first().copied().unwrap_or(0.0) * rows.max(cols) as f64 * f64::EPSILON
}

/// Smallest `L ≥ 1` meeting the tolerance on `sv` (sorted descending).
pub fn truncation_rank(sv: &[f64], eps_pod: f64, truncation: Truncation, tol: f64) -> usize {
    let weight = |s: f64| {
        if s <= tol {
            0.0
        } else {
            match truncation {
                Truncation::SingularValue => s,
                Truncation::Energy => s * s,
            }
        }
    };
    let total: f64 = sv.iter().map(|&s| weight(s)).sum();
    if total == 0.0 {
        return 1;
    }
    // tail form of the ratio test, which stays exact at eps = 0
    let mut tail = total;
    for (l, &s) in sv.iter().enumerate() {
        tail -= weight(s);
        if tail <= eps_pod * total || weight(s) == 0.0 {
            return if weight(s) == 0.0 { l.max(1) } else { l + 1 };
        }
    }
    sv.len()
}

/// Thin SVD of the snapshot matrix.
pub fn decompose(snapshots: &DMatrix<f64>) -> Result<PodDecomposition> {
    if snapshots.is_empty() {
        return Err(Error::Argument("empty snapshot matrix".into()));
    }
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("snapshot matrix has non-finite entries".into()));
    }
    let (rows, cols) = snapshots.shape();
    let svd = snapshots
        .clone()
        .try_svd(true, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let tol = rank_tolerance(&sv, rows, cols);
    let rank = sv.iter().filter(|&&s| s > tol).count().max(1);
    let modes = DMatrix::from_fn(rows, rank, |r, c| u[(r, order[c])]);
    Ok(PodDecomposition { modes, singular_values: DVector::from_vec(sv), tolerance: tol })
}

impl PodDecomposition {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    /// Singular values at or below this count as zero.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn rank_for(&self, eps_pod: f64, truncation: Truncation) -> usize {
        truncation_rank(self.singular_values.as_slice(), eps_pod, truncation, self.tolerance).min(self.rank())
    }

    /// Basis with the rank chosen by the tolerance.
    pub fn basis(&self, eps_pod: f64, truncation: Truncation) -> Result<ReducedBasis> {
        if !(0.0..1.0).contains(&eps_pod) {
            return Err(Error::Domain(format!("eps_pod must lie in [0, 1), got {eps_pod}")));
        }
        let l = self.rank_for(eps_pod, truncation);
        Ok(ReducedBasis {
            modes: self.modes.columns(0, l).into_owned(),
            singular_values: self.singular_values.clone(),
            eps_pod,
            truncation,
        })
    }

    /// Share of the singular-value sum beyond the first `l`.
    pub fn discarded_fraction(&self, l: usize) -> f64 {
        let total = self.singular_values.sum();
        if total == 0.0 {
            return 0.0;
        }
        self.singular_values.iter().skip(l).sum::<f64>() / total
    }

    /// Basis with exactly `l` modes.
    pub fn basis_with_rank(&self, l: usize) -> Result<ReducedBasis> {
        if l == 0 || l > self.rank() {
            return Err(Error::Argument(format!("rank must be in [1, {}], got {l}", self.rank())));
        }
        Ok(ReducedBasis {
            modes: self.modes.columns(0, l).into_owned(),
            singular_values: self.singular_values.clone(),
            eps_pod: self.discarded_fraction(l),
            truncation: Truncation::SingularValue,
        })
    }
}

/// POD basis of `snapshots` truncated at `eps_pod`.
pub fn pod(snapshots: &DMatrix<f64>, eps_pod: f64, truncation: Truncation) -> Result<ReducedBasis> {
    decompose(snapshots)?.basis(eps_pod, truncation)
}

impl ReducedBasis {
    pub fn dim(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }

    /// Reduced coordinates `Vᵀ u`.
    pub fn project(&self, u_h: &DVector<f64>) -> Result<DVector<f64>> {
        if u_h.len() != self.n_dof() {
            return Err(Error::Dimension { expected: self.n_dof(), actual: u_h.len() });
        }
        Ok(self.modes.tr_mul(u_h))
    }

    pub fn reconstruct(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: coeffs.len() });
        }
        Ok(&self.modes * coeffs)
    }

    /// Frobenius norm of `S − V Vᵀ S`.
    pub fn residual(&self, snapshots: &DMatrix<f64>) -> f64 {
        (snapshots - &self.modes * self.modes.tr_mul(snapshots)).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn repeated_column_gives_rank_one() {
        let col = DVector::from_fn(30, |i, _| (i as f64).sin());
        let s = DMatrix::from_columns(&[col.clone(), col.clone(), col.clone()]);
        let basis = pod(&s, 0.0, Truncation::SingularValue).unwrap();
        assert_eq!(basis.dim(), 1);
        let v = basis.modes.column(0);
        assert!((v.dot(&col).abs() - col.norm()).abs() < 1e-10);
    }

    #[test]
    fn zero_tolerance_keeps_the_rank() {
        let s = random(40, 4, 1) * random(4, 12, 2);
        assert_eq!(pod(&s, 0.0, Truncation::SingularValue).unwrap().dim(), 4);
        assert_eq!(pod(&s, 0.0, Truncation::Energy).unwrap().dim(), 4);
    }

    #[test]
    fn modes_are_orthonormal_and_sorted() {
        let s = random(60, 15, 3);
        let basis = pod(&s, 0.0, Truncation::SingularValue).unwrap();
        let gram = basis.modes.tr_mul(&basis.modes);
        assert!((gram - DMatrix::identity(15, 15)).abs().max() < 1e-10);
        let sv = basis.singular_values.as_slice();
        assert!(sv.windows(2).all(|w| w[0] >= w[1]) && sv.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn projection_identities() {
        let s = random(25, 5, 4);
        let basis = pod(&s, 0.0, Truncation::SingularValue).unwrap();
        let inside = &basis.modes * DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let back = basis.reconstruct(&basis.project(&inside).unwrap()).unwrap();
        assert!((back - &inside).norm() < 1e-10);
        let r = DVector::from_fn(25, |i, _| (i as f64 * 0.7).cos());
        let outside = &r - &basis.modes * basis.modes.tr_mul(&r);
        assert!(basis.project(&outside).unwrap().norm() < 1e-12);
        assert!(basis.project(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn energy_criterion_keeps_fewer_or_equal_modes() {
        let s = random(50, 20, 5);
        let dec = decompose(&s).unwrap();
        for eps in [0.5, 0.2, 0.05, 0.01] {
            assert!(dec.rank_for(eps, Truncation::Energy) <= dec.rank_for(eps, Truncation::SingularValue));
        }
    }

    #[test]
    fn invalid_input() {
        assert!(matches!(decompose(&DMatrix::zeros(0, 0)), Err(Error::Argument(_))));
        let mut s = random(4, 3, 6);
        s[(1, 1)] = f64::NAN;
        assert!(matches!(decompose(&s), Err(Error::Argument(_))));
        let dec = decompose(&random(5, 3, 7)).unwrap();
        assert!(dec.basis(1.0, Truncation::SingularValue).is_err());
        assert!(dec.basis_with_rank(4).is_err());
    }
}
