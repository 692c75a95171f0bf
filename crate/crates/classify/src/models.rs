//! The individual classifiers. All work on standardized features and
//! labels in {0, 1}; `score` is larger for more confident successes.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stentrom::container::{BinReader, BinWriter};
use stentrom::{Error, Result};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

fn labels_f64(y: &[u8]) -> Vec<f64> {
    y.iter().map(|&v| f64::from(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    /// Ridge on the weights; keeps the fit finite on separable data.
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { ridge: 1e-4, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Logistic {
    /// Newton iterations on the (lightly penalized) log-likelihood.
    pub fn fit(x: &DMatrix<f64>, y: &[u8], cfg: &LogisticConfig) -> Result<Self> {
        let (n, d) = x.shape();
        let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let target = DVector::from_vec(labels_f64(y));
        let mut theta = DVector::zeros(d + 1);
        for _ in 0..cfg.max_iter {
            let p = (&design * &theta).map(sigmoid);
            let mut grad = design.tr_mul(&(&p - &target));
            let weighted = DMatrix::from_fn(n, d + 1, |i, j| design[(i, j)] * p[i] * (1.0 - p[i]));
            let mut hess = design.tr_mul(&weighted);
            for j in 1..=d {
                grad[j] += cfg.ridge * theta[j];
                hess[(j, j)] += cfg.ridge;
            }
            for j in 0..=d {
                hess[(j, j)] += 1e-12;
            }
            let step =
                hess.lu().solve(&grad).ok_or_else(|| Error::Numerical("singular Hessian in logistic fit".into()))?;
            theta -= &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        Ok(Self { bias: theta[0], weights: theta.iter().skip(1).copied().collect() })
    }

    /// Probability of success.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }

    pub(crate) fn write<W: Write>(&self, out: &mut BinWriter<W>) -> Result<()> {
        out.f64s(&self.weights)?;
        out.f64(self.bias)
    }

    pub(crate) fn read<R: Read>(input: &mut BinReader<R>) -> Result<Self> {
        Ok(Self { weights: input.f64s()?, bias: input.f64()? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighbors {
    pub x: DMatrix<f64>,
    pub y: Vec<u8>,
    pub k: usize,
}

impl NearestNeighbors {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(Self { x: x.clone(), y: y.to_vec(), k })
    }

    /// Share of successes among the k nearest training points.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = (0..self.x.nrows())
            .map(|i| (self.x.row(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dist.len());
        dist[..k].iter().filter(|(_, i)| self.y[*i] == 1).count() as f64 / k as f64
    }

    pub(crate) fn write<W: Write>(&self, out: &mut BinWriter<W>) -> Result<()> {
        out.usize(self.k)?;
        out.matrix(&self.x)?;
        out.f64s(&labels_f64(&self.y))
    }

    pub(crate) fn read<R: Read>(input: &mut BinReader<R>) -> Result<Self> {
        let k = input.usize()?;
        let x = input.matrix()?;
        let y: Vec<u8> = input.f64s()?.iter().map(|&v| v as u8).collect();
        if y.len() != x.nrows() {
            return Err(Error::Format("kNN labels do not match the stored points".into()));
        }
        Ok(Self { x, y, k })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    /// Indexed by class 0/1.
    pub prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl NaiveBayes {
    /// Independent Gaussian per feature and class.
    pub fn fit(x: &DMatrix<f64>, y: &[u8]) -> Result<Self> {
        let d = x.ncols();
        let total_var: f64 = x.column_iter().map(|c| c.variance()).fold(0.0, f64::max);
        let floor = 1e-9 * total_var.max(1.0);
        let class = |c: u8| {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
            let n = idx.len() as f64;
            let mean: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| x[(i, j)]).sum::<f64>() / n).collect();
            let var: Vec<f64> =
                (0..d).map(|j| idx.iter().map(|&i| (x[(i, j)] - mean[j]).powi(2)).sum::<f64>() / n + floor).collect();
            (n / y.len() as f64, mean, var)
        };
        let (p0, m0, v0) = class(0);
        let (p1, m1, v1) = class(1);
        Ok(Self { prior: [p0, p1], mean: [m0, m1], var: [v0, v1] })
    }

    fn log_joint(&self, c: usize, x: &[f64]) -> f64 {
        self.prior[c].ln()
            + x.iter()
                .enumerate()
                .map(|(j, v)| {
                    let var = self.var[c][j];
                    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - self.mean[c][j]).powi(2) / var)
                })
                .sum::<f64>()
    }

    /// Posterior probability of success.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.log_joint(1, x) - self.log_joint(0, x))
    }

    pub(crate) fn write<W: Write>(&self, out: &mut BinWriter<W>) -> Result<()> {
        for c in 0..2 {
            out.f64(self.prior[c])?;
            out.f64s(&self.mean[c])?;
            out.f64s(&self.var[c])?;
        }
        Ok(())
    }

    pub(crate) fn read<R: Read>(input: &mut BinReader<R>) -> Result<Self> {
        let mut read_class =
            || -> Result<(f64, Vec<f64>, Vec<f64>)> { Ok((input.f64()?, input.f64s()?, input.f64s()?)) };
        let (p0, m0, v0) = read_class()?;
        let (p1, m1, v1) = read_class()?;
        Ok(Self { prior: [p0, p1], mean: [m0, m1], var: [v0, v1] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 12, min_leaf: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { success_fraction: f64, count: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART tree grown on Gini impurity. Points with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl DecisionTree {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], cfg: &TreeConfig) -> Result<Self> {
        if cfg.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(x, y, (0..y.len()).collect(), 0, cfg);
        Ok(tree)
    }

    fn grow(&mut self, x: &DMatrix<f64>, y: &[u8], idx: Vec<usize>, depth: usize, cfg: &TreeConfig) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| y[i] == 1).count();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { success_fraction: pos as f64 / n as f64, count: n });
        if depth >= cfg.max_depth || pos == 0 || pos == n || n < 2 * cfg.min_leaf {
            return id;
        }
        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..x.ncols() {
            let mut sorted = idx.clone();
            sorted.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                if y[sorted[k]] == 1 {
                    left_pos += 1;
                }
                let (nl, nr) = (k + 1, n - k - 1);
                let (a, b) = (x[(sorted[k], f)], x[(sorted[k + 1], f)]);
                if a == b || nl < cfg.min_leaf || nr < cfg.min_leaf {
                    continue;
                }
                let impurity = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(pos - left_pos, nr)) / n as f64;
                if best.is_none_or(|(bi, _, _)| impurity < bi - 1e-15) {
                    best = Some((impurity, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((impurity, feature, threshold)) = best else { return id };
        if impurity >= parent - 1e-15 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x[(i, feature)] <= threshold);
        let left = self.grow(x, y, l, depth + 1, cfg);
        let right = self.grow(x, y, r, depth + 1, cfg);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Share of successes in the leaf reached by `x`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { success_fraction, .. } => return success_fraction,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub(crate) fn write<W: Write>(&self, out: &mut BinWriter<W>) -> Result<()> {
        out.usize(self.nodes.len())?;
        for node in &self.nodes {
            match *node {
                TreeNode::Leaf { success_fraction, count } => {
                    out.u64(0)?;
                    out.f64(success_fraction)?;
                    out.usize(count)?;
                }
                TreeNode::Split { feature, threshold, left, right } => {
                    out.u64(1)?;
                    out.usize(feature)?;
                    out.f64(threshold)?;
                    out.usize(left)?;
                    out.usize(right)?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn read<R: Read>(input: &mut BinReader<R>) -> Result<Self> {
        let n = input.usize()?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(match input.u64()? {
                0 => TreeNode::Leaf { success_fraction: input.f64()?, count: input.usize()? },
                1 => {
                    let (feature, threshold, left, right) =
                        (input.usize()?, input.f64()?, input.usize()?, input.usize()?);
                    if left >= n || right >= n {
                        return Err(Error::Format("tree child index out of range".into()));
                    }
                    TreeNode::Split { feature, threshold, left, right }
                }
                t => return Err(Error::Format(format!("unknown tree node tag {t}"))),
            });
        }
        if nodes.is_empty() {
            return Err(Error::Format("empty tree".into()));
        }
        Ok(Self { nodes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Share of the training data held out for early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 10, 10],
            learning_rate: 0.1,
            momentum: 0.9,
            max_epochs: 4000,
            validation_fraction: 0.2,
            patience: 300,
            seed: 0,
        }
    }
}

/// Fully connected network, tanh hidden layers, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNetwork {
    /// `(weights [out × in], bias [out])` per layer.
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl NeuralNetwork {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].0.ncols()];
        sizes.extend(self.layers.iter().map(|(w, _)| w.nrows()));
        sizes
    }

    /// Activations of every layer for a batch (rows are samples).
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let mut z = acts[l].clone() * w.transpose();
            for mut r in z.row_iter_mut() {
                r += b.transpose();
            }
            acts.push(if l == last { z.map(sigmoid) } else { z.map(f64::tanh) });
        }
        acts
    }

    fn loss(&self, x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let out = self.forward(x).pop().unwrap();
        let eps = 1e-12;
        -y.iter()
            .enumerate()
            .map(|(i, &t)| t * (out[(i, 0)] + eps).ln() + (1.0 - t) * (1.0 - out[(i, 0)] + eps).ln())
            .sum::<f64>()
            / y.len() as f64
    }

    /// Full-batch gradient descent with momentum on the mean cross-entropy;
    /// returns the weights with the best validation loss.
    pub fn fit(x: &DMatrix<f64>, y: &[u8], cfg: &NetworkConfig) -> Result<Self> {
        if cfg.hidden.is_empty() || cfg.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = x.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_val = ((n as f64) * cfg.validation_fraction).floor() as usize;
        let n_val = if n - n_val < 2 { 0 } else { n_val };
        let (val_idx, train_idx) = order.split_at(n_val);
        let y = labels_f64(y);
        let xt = x.select_rows(train_idx);
        let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let xv = x.select_rows(val_idx);
        let yv: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();

        let mut sizes = vec![x.ncols()];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let mut net = Self {
            layers: sizes
                .windows(2)
                .map(|w| {
                    let bound = 1.0 / (w[0] as f64).sqrt();
                    (DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)), DVector::zeros(w[1]))
                })
                .collect(),
        };
        let mut velocity: Vec<(DMatrix<f64>, DVector<f64>)> =
            net.layers.iter().map(|(w, b)| (DMatrix::zeros(w.nrows(), w.ncols()), DVector::zeros(b.len()))).collect();
        let monitor = |net: &Self| if n_val > 0 { net.loss(&xv, &yv) } else { net.loss(&xt, &yt) };
        let mut best = (monitor(&net), net.clone());
        let mut since_best = 0;
        let m = xt.nrows() as f64;
        for _ in 0..cfg.max_epochs {
            let acts = net.forward(&xt);
            let last = net.layers.len() - 1;
            // sigmoid + cross-entropy: output delta is p − y
            let mut delta = DMatrix::from_fn(xt.nrows(), 1, |i, _| (acts[last + 1][(i, 0)] - yt[i]) / m);
            for l in (0..=last).rev() {
                let grad_w = delta.transpose() * &acts[l];
                let grad_b = DVector::from_fn(delta.ncols(), |j, _| delta.column(j).sum());
                if l > 0 {
                    let back = &delta * &net.layers[l].0;
                    delta = back.component_mul(&acts[l].map(|a| 1.0 - a * a));
                }
                let (vw, vb) = &mut velocity[l];
                *vw = &*vw * cfg.momentum - grad_w * cfg.learning_rate;
                *vb = &*vb * cfg.momentum - grad_b * cfg.learning_rate;
                net.layers[l].0 += &*vw;
                net.layers[l].1 += &*vb;
            }
            let loss = monitor(&net);
            if !loss.is_finite() {
                return Err(Error::Numerical("network training diverged".into()));
            }
            if loss < best.0 - 1e-9 {
                best = (loss, net.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        Ok(best.1)
    }

    /// Output probability of success.
    pub fn score(&self, x: &[f64]) -> f64 {
        let input = DMatrix::from_row_slice(1, x.len(), x);
        self.forward(&input).pop().unwrap()[(0, 0)]
    }

    pub(crate) fn write<W: Write>(&self, out: &mut BinWriter<W>) -> Result<()> {
        out.usize(self.layers.len())?;
        for (w, b) in &self.layers {
            out.matrix(w)?;
            out.vector(b)?;
        }
        Ok(())
    }

    pub(crate) fn read<R: Read>(input: &mut BinReader<R>) -> Result<Self> {
        let n = input.usize()?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let w = input.matrix()?;
            let b = input.vector()?;
            if b.len() != w.nrows() {
                return Err(Error::Format("layer bias does not match its weights".into()));
            }
            layers.push((w, b));
        }
        if layers.is_empty() || layers.windows(2).any(|p| p[0].0.nrows() != p[1].0.ncols()) {
            return Err(Error::Format("inconsistent network layers".into()));
        }
        Ok(Self { layers })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    /// Box constraint of the soft margin.
    pub c: f64,
    /// KKT violation tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, tolerance: 1e-3, max_iter: 200_000 }
    }
}

/// Soft-margin SVM with kernel `(xᵀx' + 1)²`, trained on the dual by SMO
/// with maximal-violating-pair selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportVectorMachine {
    pub support: DMatrix<f64>,
    /// `α_i y_i` with `y_i ∈ {−1, 1}`.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

pub fn poly2_kernel(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot + 1.0).powi(2)
}

impl SupportVectorMachine {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], cfg: &SvmConfig) -> Result<Self> {
        if !(cfg.c > 0.0) {
            return Err(Error::Config("SVM box constraint must be positive".into()));
        }
        let n = x.nrows();
        let c = cfg.c;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| row(x, i)).collect();
        let s: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let q = DMatrix::from_fn(n, n, |i, j| s[i] * s[j] * poly2_kernel(&rows[i], &rows[j]));
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let tau = 1e-12;
        let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
        let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
        for _ in 0..cfg.max_iter {
            let mut i = usize::MAX;
            let mut g_max = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut g_min = f64::INFINITY;
            for t in 0..n {
                let v = -s[t] * grad[t];
                if up(alpha[t], s[t]) && v > g_max {
                    g_max = v;
                    i = t;
                }
                if low(alpha[t], s[t]) && v < g_min {
                    g_min = v;
                    j = t;
                }
            }
            if i == usize::MAX || j == usize::MAX || g_max - g_min < cfg.tolerance {
                break;
            }
            let (old_i, old_j) = (alpha[i], alpha[j]);
            if s[i] != s[j] {
                let quad = (q[(i, i)] + q[(j, j)] + 2.0 * q[(i, j)]).max(tau);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (q[(i, i)] + q[(j, j)] - 2.0 * q[(i, j)]).max(tau);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for k in 0..n {
                grad[k] += q[(i, k)] * di + q[(j, k)] * dj;
            }
        }
        // offset from the free multipliers, else midway between the bounds
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in 0..n {
            let yg = s[t] * grad[t];
            if alpha[t] >= c {
                if s[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if alpha[t] <= 0.0 {
                if s[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        let rho = if free > 0 { sum_free / free as f64 } else { 0.5 * (ub + lb) };
        let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
        Ok(Self {
            support: x.select_rows(&sv),
            coefficients: sv.iter().map(|&t| alpha[t] * s[t]).collect(),
            bias: -rho,
        })
    }

    /// Signed decision value; positive means success.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().enumerate().map(|(k, a)| a * poly2_kernel(&row(&self.support, k), x)).sum::<f64>()
            + self.bias
    }

    pub(crate) fn write<W: Write>(&self, out: &mut BinWriter<W>) -> Result<()> {
        out.matrix(&self.support)?;
        out.f64s(&self.coefficients)?;
        out.f64(self.bias)
    }

    pub(crate) fn read<R: Read>(input: &mut BinReader<R>) -> Result<Self> {
        let support = input.matrix()?;
        let coefficients = input.f64s()?;
        if coefficients.len() != support.nrows() {
            return Err(Error::Format("SVM coefficients do not match the support vectors".into()));
        }
        Ok(Self { support, coefficients, bias: input.f64()? })
    }
}
