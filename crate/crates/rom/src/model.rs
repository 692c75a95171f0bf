//! POD basis plus one regressor per reduced coefficient.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use stentrom::container::{BinReader, BinWriter};
use stentrom::dataset::{MuB, Predictors};
use stentrom::standardize::Standardizer;
use stentrom::{Error, Result};

use crate::gpr::{train_igpr, GprConfig, GprModel, Hyperparameters};
use crate::pod::{decompose, ReducedBasis, Truncation};

const KIND: &str = "reduced-model";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomConfig {
    pub eps_pod: f64,
    /// Fixed number of modes; overrides `eps_pod` when set.
    pub rank: Option<usize>,
    pub truncation: Truncation,
    pub gpr: GprConfig,
}

impl Default for RomConfig {
    fn default() -> Self {
        Self { eps_pod: 0.01, rank: Some(15), truncation: Truncation::SingularValue, gpr: GprConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub basis: ReducedBasis,
    pub regressors: Vec<GprModel>,
    pub predictors: Predictors,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub u_p: DVector<f64>,
    pub coeff_mean: DVector<f64>,
    pub coeff_var: DVector<f64>,
    /// Standard deviation of each node's displacement vector.
    pub node_std: Vec<f64>,
}

impl ReducedModel {
    /// `snapshots` holds one displacement column per sample and `features`
    /// the matching predictor rows.
    pub fn train(
        snapshots: &DMatrix<f64>,
        features: &DMatrix<f64>,
        predictors: Predictors,
        cfg: &RomConfig,
    ) -> Result<Self> {
        if features.nrows() != snapshots.ncols() {
            return Err(Error::Dimension { expected: snapshots.ncols(), actual: features.nrows() });
        }
        if features.ncols() != predictors.dimension() {
            return Err(Error::Dimension { expected: predictors.dimension(), actual: features.ncols() });
        }
        if !snapshots.nrows().is_multiple_of(3) {
            return Err(Error::Data("snapshot length is not a multiple of 3".into()));
        }
        let dec = decompose(snapshots)?;
        let basis = match cfg.rank {
            Some(l) if l > dec.rank() => {
                warn!("requested {l} modes but the snapshots have rank {}; keeping {}", dec.rank(), dec.rank());
                dec.basis_with_rank(dec.rank())?
            }
            Some(l) => dec.basis_with_rank(l)?,
            None => dec.basis(cfg.eps_pod, cfg.truncation)?,
        };
        let coeffs = basis.modes.tr_mul(snapshots).transpose();
        let regressors = train_igpr(features, &coeffs, &cfg.gpr)?;
        Ok(Self { basis, regressors, predictors })
    }

    pub fn rank(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_dof(&self) -> usize {
        self.basis.n_dof()
    }

    pub fn input_dim(&self) -> usize {
        self.predictors.dimension()
    }

    /// The model restricted to its first `l` modes. Each regressor depends
    /// only on its own mode, so this equals training with rank `l`.
    pub fn truncated(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.rank() {
            return Err(Error::Argument(format!("cannot keep {l} of {} modes", self.rank())));
        }
        let sv = &self.basis.singular_values;
        let total = sv.sum();
        let eps_pod = if total > 0.0 { sv.rows(l, sv.len() - l).sum() / total } else { 0.0 };
        Ok(Self {
            basis: ReducedBasis {
                modes: self.basis.modes.columns(0, l).into_owned(),
                singular_values: sv.clone(),
                eps_pod,
                truncation: self.basis.truncation,
            },
            regressors: self.regressors[..l].to_vec(),
            predictors: self.predictors.clone(),
        })
    }

    /// Prediction from a predictor vector.
    pub fn predict(&self, features: &[f64]) -> Result<Prediction> {
        if self.regressors.len() != self.rank() || self.regressors.is_empty() {
            return Err(Error::State(format!(
                "model has {} regressors for {} modes",
                self.regressors.len(),
                self.rank()
            )));
        }
        if features.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), actual: features.len() });
        }
        let l = self.rank();
        let mut mean = DVector::zeros(l);
        let mut var = DVector::zeros(l);
        for (k, gp) in self.regressors.iter().enumerate() {
            let (m, v) = gp.predict(features)?;
            mean[k] = m;
            var[k] = v;
        }
        let u_p = &self.basis.modes * &mean;
        let v = &self.basis.modes;
        let node_std = (0..self.n_dof() / 3)
            .map(|node| {
                let mut s = 0.0;
                for r in 3 * node..3 * node + 3 {
                    for k in 0..l {
                        s += v[(r, k)] * v[(r, k)] * var[k];
                    }
                }
                s.sqrt()
            })
            .collect();
        Ok(Prediction { u_p, coeff_mean: mean, coeff_var: var, node_std })
    }

    /// Prediction from deployment parameters, deriving the predictors first.
    pub fn predict_mu(&self, mu: &MuB) -> Result<Prediction> {
        self.predict(&self.predictors.features(mu)?)
    }

    /// Full-order displacements drawn from the diagonal coefficient posterior.
    pub fn sample_posterior(&self, prediction: &Prediction, n_samples: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_samples)
            .map(|_| {
                let coeffs = DVector::from_fn(prediction.coeff_mean.len(), |k, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    prediction.coeff_mean[k] + prediction.coeff_var[k].sqrt() * z
                });
                &self.basis.modes * coeffs
            })
            .collect()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BinWriter::new(w, KIND)?;
        out.str(&serde_json::to_string(&self.predictors)?)?;
        out.usize(self.rank())?;
        out.usize(self.n_dof())?;
        out.usize(self.input_dim())?;
        out.matrix(&self.basis.modes)?;
        out.vector(&self.basis.singular_values)?;
        out.f64(self.basis.eps_pod)?;
        out.u64(self.basis.truncation.tag())?;
        for gp in &self.regressors {
            out.f64(gp.hyper.sigma_k)?;
            out.f64s(&gp.hyper.lengthscales)?;
            out.f64(gp.hyper.sigma_n)?;
            out.matrix(&gp.x)?;
            out.vector(&gp.alpha)?;
            out.matrix(&gp.chol)?;
            out.f64s(&gp.x_scaler.mean)?;
            out.f64s(&gp.x_scaler.scale)?;
            out.f64(gp.y_mean)?;
            out.f64(gp.y_scale)?;
        }
        out.finish()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut input = BinReader::new(r, KIND)?;
        let predictors: Predictors =
            serde_json::from_str(&input.str()?).map_err(|e| Error::Format(format!("predictor block: {e}")))?;
        let l = input.usize()?;
        let n_h = input.usize()?;
        let d = input.usize()?;
        let modes = input.matrix()?;
        if modes.shape() != (n_h, l) || predictors.dimension() != d {
            return Err(Error::Format("header does not match the stored basis".into()));
        }
        let singular_values = input.vector()?;
        let eps_pod = input.f64()?;
        let truncation = Truncation::from_tag(input.u64()?)?;
        let mut regressors = Vec::with_capacity(l);
        for _ in 0..l {
            let sigma_k = input.f64()?;
            let lengthscales = input.f64s()?;
            let sigma_n = input.f64()?;
            let x = input.matrix()?;
            let alpha = input.vector()?;
            let chol = input.matrix()?;
            let mean = input.f64s()?;
            let scale = input.f64s()?;
            let y_mean = input.f64()?;
            let y_scale = input.f64()?;
            let n = x.nrows();
            if x.ncols() != d || alpha.len() != n || chol.shape() != (n, n) || mean.len() != d || scale.len() != d {
                return Err(Error::Format("inconsistent regressor block".into()));
            }
            regressors.push(GprModel {
                hyper: Hyperparameters { sigma_k, lengthscales, sigma_n },
                x,
                alpha,
                chol,
                x_scaler: Standardizer { mean, scale },
                y_mean,
                y_scale,
            });
        }
        Ok(Self { basis: ReducedBasis { modes, singular_values, eps_pod, truncation }, regressors, predictors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        self.write(BufWriter::new(fs::File::create(&tmp)?))?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::read(BufReader::new(file))
    }
}
