//! Single-output Gaussian-process regression with a Matérn 5/2 kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stentrom::standardize::Standardizer;
use stentrom::{Error, Result};

use crate::simplex::{minimize, SimplexOptions};

const SQRT5: f64 = 2.236_067_977_499_79;

fn matern52_scaled(r_over_l: f64, sigma_k2: f64) -> f64 {
    let a = SQRT5 * r_over_l;
    sigma_k2 * (1.0 + a + a * a / 3.0) * (-a).exp()
}

/// `σ_κ²·(1 + √5 r/σ_l + 5r²/(3σ_l²))·exp(−√5 r/σ_l)` with `r = ‖xi − xj‖`.
pub fn kernel_matern52(xi: &[f64], xj: &[f64], sigma_k: f64, sigma_l: f64) -> Result<f64> {
    if !(sigma_k > 0.0) || !(sigma_l > 0.0) {
        return Err(Error::Domain(format!(
            "kernel hyperparameters must be positive, got sigma_k={sigma_k}, sigma_l={sigma_l}"
        )));
    }
    if xi.len() != xj.len() {
        return Err(Error::Dimension { expected: xi.len(), actual: xj.len() });
    }
    let r = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(matern52_scaled(r / sigma_l, sigma_k * sigma_k))
}

/// Kernel hyperparameters on standardized data. One lengthscale means an
/// isotropic kernel, otherwise one per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma_k: f64,
    pub lengthscales: Vec<f64>,
    pub sigma_n: f64,
}

impl Hyperparameters {
    fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.lengthscales.len() == 1 {
            let l = self.lengthscales[0];
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / l
        } else {
            a.iter().zip(b).zip(&self.lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
        }
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        matern52_scaled(self.scaled_distance(a, b), self.sigma_k * self.sigma_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GprConfig {
    /// Additional random starts of the likelihood search.
    pub restarts: usize,
    pub noise_floor: f64,
    /// One lengthscale per input dimension.
    pub ard: bool,
    /// Keep the noise at this value instead of fitting it.
    pub fixed_noise: Option<f64>,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self { restarts: 5, noise_floor: 1e-8, ard: false, fixed_noise: None, max_evals: 600, seed: 0 }
    }
}

/// Trained regressor: standardized training inputs, Cholesky factor of
/// `K + σ_n² I` and weights `α = K_y⁻¹ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    pub hyper: Hyperparameters,
    pub x: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Lower-triangular factor.
    pub chol: DMatrix<f64>,
    pub x_scaler: Standardizer,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

fn gram(hyper: &Hyperparameters, xs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    let noise = hyper.sigma_n * hyper.sigma_n;
    for i in 0..n {
        for j in 0..=i {
            let v = hyper.kernel(&xs[i], &xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += noise;
    }
    k
}

/// `−log p(y | X, θ)` and the factorization, or `None` when `K_y` is not
/// numerically positive definite.
fn factorize(
    hyper: &Hyperparameters,
    xs: &[Vec<f64>],
    y: &DVector<f64>,
) -> Option<(f64, Cholesky<f64, Dyn>, DVector<f64>)> {
    let chol = Cholesky::new(gram(hyper, xs))?;
    let alpha = chol.solve(y);
    let l = chol.l_dirty();
    let log_det: f64 = (0..y.len()).map(|i| l[(i, i)].ln()).sum();
    if !log_det.is_finite() {
        return None;
    }
    let nll = 0.5 * y.dot(&alpha) + log_det + 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    nll.is_finite().then_some((nll, chol, alpha))
}

const LOG_BOUND: f64 = 7.0;

impl GprModel {
    /// Fits hyperparameters by maximizing the marginal likelihood over
    /// log-parameters, best of several simplex searches.
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &GprConfig) -> Result<Self> {
        check_training(x, y)?;
        let scaler = Standardizer::fit(x);
        let xs = rows(&scaler.apply_rows(x));
        let (y_mean, y_scale, ys) = standardize_output(y);
        let d = x.ncols();
        let n_len = if cfg.ard { d } else { 1 };
        let floor = cfg.noise_floor.max(0.0);
        let log_floor = floor.max(1e-300).ln();

        let decode = |theta: &[f64]| -> Hyperparameters {
            let c = |v: f64| v.clamp(-LOG_BOUND, LOG_BOUND);
            let sigma_n = match cfg.fixed_noise {
                Some(s) => s.max(floor),
                None => theta[n_len + 1].clamp(log_floor, 2.0_f64.ln()).exp(),
            };
            Hyperparameters {
                sigma_k: c(theta[0]).exp(),
                lengthscales: theta[1..=n_len].iter().map(|&t| c(t).exp()).collect(),
                sigma_n,
            }
        };
        let objective = |theta: &[f64]| -> f64 {
            let h = decode(theta);
            // out-of-box moves are projected back but penalized so the simplex turns around
            let mut excess: f64 = theta[..=n_len].iter().map(|t| (t.abs() - LOG_BOUND).max(0.0)).sum();
            if let Some(&t) = theta.get(n_len + 1) {
                excess += (log_floor - t).max(0.0) + (t - 2.0_f64.ln()).max(0.0);
            }
            match factorize(&h, &xs, &ys) {
                Some((nll, _, _)) => nll + 1e3 * excess,
                None => 1e30,
            }
        };

        let mut start = vec![0.0; n_len + 1];
        if cfg.fixed_noise.is_none() {
            start.push(0.01_f64.ln().max(log_floor));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let opts = SimplexOptions { max_evals: cfg.max_evals, ..Default::default() };
        let mut best = minimize(objective, &start, &opts);
        for _ in 0..cfg.restarts {
            let mut s: Vec<f64> = (0..=n_len).map(|_| rng.random_range(-2.0..2.0)).collect();
            if cfg.fixed_noise.is_none() {
                s.push(rng.random_range(log_floor.max(-12.0)..-1.0));
            }
            let candidate = minimize(objective, &s, &opts);
            if candidate.1 < best.1 {
                best = candidate;
            }
        }
        Self::with_hyper_standardized(decode(&best.0), xs, scaler, y_mean, y_scale, &ys)
    }

    /// Builds the model for given hyperparameters (on standardized data).
    pub fn with_hyperparameters(x: &DMatrix<f64>, y: &DVector<f64>, hyper: Hyperparameters) -> Result<Self> {
        check_training(x, y)?;
        if !(hyper.sigma_k > 0.0) || hyper.lengthscales.iter().any(|&l| !(l > 0.0)) || !(hyper.sigma_n >= 0.0) {
            return Err(Error::Domain("kernel hyperparameters must be positive".into()));
        }
        if hyper.lengthscales.len() != 1 && hyper.lengthscales.len() != x.ncols() {
            return Err(Error::Dimension { expected: x.ncols(), actual: hyper.lengthscales.len() });
        }
        let scaler = Standardizer::fit(x);
        let xs = rows(&scaler.apply_rows(x));
        let (y_mean, y_scale, ys) = standardize_output(y);
        Self::with_hyper_standardized(hyper, xs, scaler, y_mean, y_scale, &ys)
    }

    fn with_hyper_standardized(
        hyper: Hyperparameters,
        xs: Vec<Vec<f64>>,
        x_scaler: Standardizer,
        y_mean: f64,
        y_scale: f64,
        ys: &DVector<f64>,
    ) -> Result<Self> {
        let (_, chol, alpha) = factorize(&hyper, &xs, ys).ok_or_else(|| {
            Error::Numerical(format!(
                "covariance matrix is not positive definite (sigma_n = {:e}); duplicate inputs with conflicting outputs?",
                hyper.sigma_n
            ))
        })?;
        let d = x_scaler.dim();
        let x = DMatrix::from_fn(xs.len(), d, |i, j| xs[i][j]);
        Ok(Self { hyper, x, alpha, chol: chol.unpack(), x_scaler, y_mean, y_scale })
    }

    pub fn input_dim(&self) -> usize {
        self.x_scaler.dim()
    }

    /// Kernel vector between the standardized query and the training inputs.
    fn cross_kernel(&self, z: &[f64]) -> DVector<f64> {
        let mut row = vec![0.0; z.len()];
        DVector::from_fn(self.x.nrows(), |i, _| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.x[(i, j)];
            }
            self.hyper.kernel(z, &row)
        })
    }

    /// Posterior mean and variance of the latent function, in output units.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), actual: x.len() });
        }
        let z = self.x_scaler.apply(x);
        let k_star = self.cross_kernel(&z);
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let var = (self.hyper.sigma_k * self.hyper.sigma_k - v.norm_squared()).max(0.0);
        Ok((self.y_mean + self.y_scale * mean, self.y_scale * self.y_scale * var))
    }

    /// Largest posterior variance the model can report, `y_scale²(σ_κ² + σ_n²)`.
    pub fn variance_bound(&self) -> f64 {
        self.y_scale * self.y_scale * (self.hyper.sigma_k.powi(2) + self.hyper.sigma_n.powi(2))
    }

    /// Log marginal likelihood of the standardized training outputs.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.alpha.len();
        let y = &self.chol * self.chol.tr_mul(&self.alpha);
        let log_det: f64 = (0..n).map(|i| self.chol[(i, i)].ln()).sum();
        -(0.5 * y.dot(&self.alpha) + log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

fn check_training(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::Data(format!("need at least two training points, got {}", x.nrows())));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), actual: y.len() });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("training data has non-finite entries".into()));
    }
    Ok(())
}

fn standardize_output(y: &DVector<f64>) -> (f64, f64, DVector<f64>) {
    let s = Standardizer::fit(&DMatrix::from_column_slice(y.len(), 1, y.as_slice()));
    let (m, sc) = (s.mean[0], s.scale[0]);
    (m, sc, y.map(|v| (v - m) / sc))
}

/// One independent regressor per output column, trained in parallel.
pub fn train_igpr(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &GprConfig) -> Result<Vec<GprModel>> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension { expected: x.nrows(), actual: y.nrows() });
    }
    (0..y.ncols())
        .into_par_iter()
        .map(|c| {
            let col = y.column(c).into_owned();
            let cfg = GprConfig { seed: cfg.seed.wrapping_add(c as u64), ..*cfg };
            GprModel::fit(x, &col, &cfg)
        })
        .collect()
}
