//! Deployment-parameter sampling, high-fidelity campaigns and the on-disk
//! sample store.
//!
//! A campaign directory holds `manifest.json` and one directory per sample
//! under `samples/` with `mu.json`, `label.json` and, for converged runs,
//! `u_h.bin` (little-endian f64). Sample directories are written under a
//! temporary name and renamed, so a directory that exists is complete.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, Point3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fem::{project_centerline, CenterlinePath, Deployer, PhaseTimings, SolverConfig};
use crate::stent::{generate_stent, StentMesh, StentSpec};
use crate::vessel::{VesselFrame, VesselModel, VesselParams};

pub const PARAM_NAMES: [&str; 6] = ["y_p1", "z_p1", "d_v", "d_a", "y_ca", "eta"];
const FORMAT_VERSION: u32 = 1;

/// Deployment parameters `[y_P1, z_P1, D_v, D_a, y_Ca, η]` in mm (η is a
/// fraction of the centerline length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MuB(pub [f64; 6]);

impl MuB {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; 6] = values.try_into().map_err(|_| Error::Dimension { expected: 6, actual: values.len() })?;
        Ok(Self(arr))
    }

    pub fn vessel_params(&self) -> VesselParams {
        let [y_p1, z_p1, d_v, d_a, y_ca, _] = self.0;
        VesselParams { y_p1, z_p1, d_v, d_a, y_ca }
    }

    pub fn eta(&self) -> f64 {
        self.0[5]
    }
}

/// Admissible aneurysm offsets for given diameters: from
/// `vessel_lo·D_v/2 + aneurysm_lo·D_a` to `upper·(D_v/2 + D_a/2)`, which
/// keeps the sphere intersecting the tube so there is a neck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeckBounds {
    pub vessel_lo: f64,
    pub aneurysm_lo: f64,
    pub upper: f64,
}

impl Default for NeckBounds {
    fn default() -> Self {
        Self { vessel_lo: 0.6, aneurysm_lo: 0.3, upper: 0.9 }
    }
}

impl NeckBounds {
    pub fn interval(&self, d_v: f64, d_a: f64) -> [f64; 2] {
        [self.vessel_lo * 0.5 * d_v + self.aneurysm_lo * d_a, self.upper * 0.5 * (d_v + d_a)]
    }
}

/// Sampling box of the deployment parameters. `y_ca` is given as a
/// fraction of the neck interval of the sampled diameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSpace {
    pub y_p1: [f64; 2],
    pub z_p1: [f64; 2],
    pub d_v: [f64; 2],
    pub d_a: [f64; 2],
    pub y_ca: [f64; 2],
    pub neck: NeckBounds,
    pub eta: [f64; 2],
}

impl Default for ParamSpace {
    fn default() -> Self {
        Self {
            y_p1: [0.0, 8.0],
            z_p1: [8.0, 12.0],
            d_v: [2.0, 4.0],
            d_a: [5.0, 10.0],
            y_ca: [0.0, 1.0],
            neck: NeckBounds::default(),
            eta: [0.25, 0.55],
        }
    }
}

impl ParamSpace {
    fn ranges(&self) -> [(&'static str, [f64; 2]); 6] {
        [
            ("y_p1", self.y_p1),
            ("z_p1", self.z_p1),
            ("d_v", self.d_v),
            ("d_a", self.d_a),
            ("y_ca", self.y_ca),
            ("eta", self.eta),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in self.ranges() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("range of {name} needs lower < upper, got [{lo}, {hi}]")));
            }
        }
        if self.d_v[0] <= 0.0 || self.d_a[0] <= 0.0 {
            return Err(Error::Config("diameters must be positive".into()));
        }
        if self.y_ca[0] < 0.0 || self.y_ca[1] > 1.0 {
            return Err(Error::Config("y_ca is a fraction of the neck interval and must lie in [0, 1]".into()));
        }
        if self.eta[0] < 0.0 || self.eta[1] > 1.0 {
            return Err(Error::Config("eta must lie in [0, 1]".into()));
        }
        let n = self.neck;
        let lo = n.interval(self.d_v[0], self.d_a[0]);
        if !(lo[0] < lo[1]) || n.upper >= 1.0 {
            return Err(Error::Config("neck bounds leave no admissible aneurysm offset".into()));
        }
        Ok(())
    }

    /// Maps a point of the unit hypercube to parameters.
    pub fn map_unit(&self, u: &[f64; 6]) -> MuB {
        let lerp = |[lo, hi]: [f64; 2], t: f64| lo + t * (hi - lo);
        let d_v = lerp(self.d_v, u[2]);
        let d_a = lerp(self.d_a, u[3]);
        let fraction = lerp(self.y_ca, u[4]);
        MuB([
            lerp(self.y_p1, u[0]),
            lerp(self.z_p1, u[1]),
            d_v,
            d_a,
            lerp(self.neck.interval(d_v, d_a), fraction),
            lerp(self.eta, u[5]),
        ])
    }
}

/// Latin hypercube in `[0, 1)^dims`: in every dimension each of the `n`
/// equal strata holds exactly one sample.
pub fn lhs_unit(n: usize, dims: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, dims);
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            out[(i, d)] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

/// `n × 6` plan of deployment parameters, one row per sample.
pub fn lhs_plan(space: &ParamSpace, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    space.validate()?;
    if n < 2 {
        return Err(Error::Argument(format!("a Latin hypercube needs at least two samples, got {n}")));
    }
    let unit = lhs_unit(n, 6, seed);
    let mut plan = DMatrix::zeros(n, 6);
    for i in 0..n {
        let u: [f64; 6] = std::array::from_fn(|d| unit[(i, d)]);
        let mu = space.map_unit(&u);
        for d in 0..6 {
            plan[(i, d)] = mu.0[d];
        }
    }
    Ok(plan)
}

pub fn plan_rows(plan: &DMatrix<f64>) -> Result<Vec<MuB>> {
    (0..plan.nrows()).map(|i| MuB::from_slice(&plan.row(i).iter().copied().collect::<Vec<_>>())).collect()
}

fn min_pairwise(rows: &[Vec<f64>], picked: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, &i) in picked.iter().enumerate() {
        for &j in &picked[a + 1..] {
            best = best.min(squared_distance(&rows[i], &rows[j]));
        }
    }
    best.sqrt()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rows of `plan` chosen greedily to maximize the minimum pairwise distance
/// (columns scaled to unit range), best of several random starts. Subsets
/// for different `n` need not be nested.
pub fn sub_plan(plan: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let rows = plan.nrows();
    if n == 0 || n >= rows {
        return Err(Error::Argument(format!("subset size must be in [1, {}), got {n}", rows)));
    }
    let scaled: Vec<Vec<f64>> = {
        let mut cols = Vec::with_capacity(plan.ncols());
        for c in plan.column_iter() {
            let lo = c.min();
            let span = c.max() - lo;
            cols.push((lo, if span > 0.0 { span } else { 1.0 }));
        }
        (0..rows).map(|i| (0..plan.ncols()).map(|d| (plan[(i, d)] - cols[d].0) / cols[d].1).collect()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = 10.min(rows);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let start = rng.random_range(0..rows);
        let mut picked = vec![start];
        let mut nearest: Vec<f64> = (0..rows).map(|j| squared_distance(&scaled[start], &scaled[j])).collect();
        while picked.len() < n {
            let next = (0..rows)
                .filter(|j| !picked.contains(j))
                .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]))
                .expect("fewer picks than rows");
            picked.push(next);
            for j in 0..rows {
                nearest[j] = nearest[j].min(squared_distance(&scaled[next], &scaled[j]));
            }
        }
        let score = min_pairwise(&scaled, &picked);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, picked));
        }
    }
    let (_, picked) = best.expect("at least one restart");
    Ok(DMatrix::from_fn(n, plan.ncols(), |i, d| plan[(picked[i], d)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Success,
    Failure,
}

impl Label {
    /// 1 for success, 0 for failure.
    pub fn as_class(self) -> u8 {
        match self {
            Label::Success => 1,
            Label::Failure => 0,
        }
    }

    pub fn from_class(class: u8) -> Self {
        if class == 1 {
            Label::Success
        } else {
            Label::Failure
        }
    }
}

/// Failure if any node of the first or last ring ends up inside the
/// aneurysm sphere, shrunk by the wire radius.
pub fn label_outcome(mesh: &StentMesh, positions: &[Point3<f64>], vessel: &VesselModel) -> Label {
    let limit = vessel.aneurysm_radius() - mesh.spec.wire_radius;
    let inside = mesh.extremity_nodes().any(|n| (vessel.c_a - positions[n]).norm() < limit);
    if inside {
        Label::Failure
    } else {
        Label::Success
    }
}

/// Offset of the aneurysm center from the centerline midpoint.
pub fn aneurysm_offset(vessel: &VesselModel) -> f64 {
    vessel.c_a.y - vessel.centerline.eval(0.5).y
}

/// `[y_Q1, z_Q1, …, y_QN, z_QN, D_v, D_a, y_Ca]` with the `Q_i` equally
/// spaced by arc length along the positioned centerline, ends included.
pub fn extract_mu_cl(ct: &CenterlinePath, n_cl: usize, vessel: &VesselModel) -> Result<Vec<f64>> {
    if n_cl < 2 {
        return Err(Error::Argument(format!("need at least two centerline points, got {n_cl}")));
    }
    let mut out: Vec<f64> = ct.resample(n_cl)?.iter().flat_map(|q| [q.y, q.z]).collect();
    out.extend([vessel.d_v, vessel.d_a, aneurysm_offset(vessel)]);
    Ok(out)
}

/// Which parameters the surrogates read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    MuB,
    MuCl { n_cl: usize },
}

impl PredictorKind {
    pub fn dimension(&self) -> usize {
        match self {
            PredictorKind::MuB => 6,
            PredictorKind::MuCl { n_cl } => 2 * n_cl + 3,
        }
    }

    pub fn name(&self) -> String {
        match self {
            PredictorKind::MuB => "mu_B".into(),
            PredictorKind::MuCl { n_cl } => format!("mu_cl({n_cl})"),
        }
    }
}

/// Turns deployment parameters into predictor vectors. The centerline
/// predictors only need the geometry: the crimped stent axis is projected
/// onto the vessel, no simulation is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictors {
    pub kind: PredictorKind,
    pub crimped_centerline: CenterlinePath,
    pub frame: VesselFrame,
}

impl Predictors {
    pub fn features(&self, mu: &MuB) -> Result<Vec<f64>> {
        match self.kind {
            PredictorKind::MuB => Ok(mu.0.to_vec()),
            PredictorKind::MuCl { n_cl } => {
                let vessel = VesselModel::from_params(&mu.vessel_params(), &self.frame)?;
                let ct = project_centerline(&self.crimped_centerline, &vessel, mu.eta())?;
                extract_mu_cl(&ct, n_cl, &vessel)
            }
        }
    }

    pub fn dimension(&self) -> usize {
        self.kind.dimension()
    }
}

/// Everything that determines a campaign's results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub space: ParamSpace,
    pub stent: StentSpec,
    pub solver: SolverConfig,
    pub frame: VesselFrame,
    /// Number of centerline points stored in `mu_cl`.
    pub n_cl: usize,
    /// Also write crimped/positioned/deployed VTK files per sample.
    pub write_vtk: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            n_samples: 60,
            seed: 1,
            space: ParamSpace::default(),
            stent: StentSpec::coarse(),
            solver: SolverConfig::default(),
            frame: VesselFrame::default(),
            n_cl: 3,
            write_vtk: false,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.stent.validate()?;
        self.solver.validate()?;
        if self.n_samples < 2 {
            return Err(Error::Config("a campaign needs at least two samples".into()));
        }
        if self.n_cl < 2 {
            return Err(Error::Config("n_cl must be at least 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: CampaignConfig,
    pub config_hash: String,
    pub n_nodes: usize,
    pub plan: Vec<MuB>,
    pub crimped_centerline: CenterlinePath,
}

impl Manifest {
    pub fn predictors(&self, kind: PredictorKind) -> Predictors {
        Predictors { kind, crimped_centerline: self.crimped_centerline.clone(), frame: self.config.frame }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HFSample {
    pub id: usize,
    pub mu_b: MuB,
    pub mu_cl: Vec<f64>,
    pub label: Option<Label>,
    pub converged: bool,
    pub runtime_s: f64,
    /// Nodal displacements, present only for converged runs.
    #[serde(skip)]
    pub u_h: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MuRecord {
    id: usize,
    mu_b: MuB,
    mu_cl: Vec<f64>,
}

/// Sidecar of one run.
#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    label: Option<Label>,
    converged: bool,
    runtime_s: f64,
    final_kinetic_energy: Option<f64>,
    steps: Option<usize>,
    timings: Option<PhaseTimings>,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HFDataset {
    pub manifest: Manifest,
    pub samples: Vec<HFSample>,
}

fn sample_dir(root: &Path, id: usize) -> PathBuf {
    root.join("samples").join(format!("{id:05}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut w = BufWriter::new(fs::File::create(&tmp)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush()?;
    drop(w);
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!("{}: length is not a multiple of 8", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn run_sample(root: &Path, deployer: &Deployer, config: &CampaignConfig, id: usize, mu: MuB) -> Result<HFSample> {
    let started = Instant::now();
    let vessel = VesselModel::from_params(&mu.vessel_params(), &config.frame)?;
    let ct = project_centerline(deployer.crimped_path(), &vessel, mu.eta())?;
    let mu_cl = extract_mu_cl(&ct, config.n_cl, &vessel)?;

    let outcome = deployer.run(&vessel, mu.eta());
    let runtime_s = started.elapsed().as_secs_f64();
    let tmp = root.join("samples").join(format!(".tmp-{id:05}-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    write_json(&tmp.join("mu.json"), &MuRecord { id, mu_b: mu, mu_cl: mu_cl.clone() })?;
    let sample = match outcome {
        Ok(run) => {
            let label = label_outcome(&deployer.mesh, &run.deployed, &vessel);
            write_f64_le(&tmp.join("u_h.bin"), &run.u_h)?;
            if config.write_vtk {
                for (name, pos) in
                    [("crimped", &run.crimped), ("positioned", &run.positioned), ("deployed", &run.deployed)]
                {
                    let f = BufWriter::new(fs::File::create(tmp.join(format!("{name}.vtk")))?);
                    deployer.mesh.write_vtk(f, &format!("sample {id} {name}"), pos)?;
                }
            }
            write_json(
                &tmp.join("label.json"),
                &RunRecord {
                    label: Some(label),
                    converged: true,
                    runtime_s,
                    final_kinetic_energy: Some(run.report.kinetic_energy),
                    steps: Some(run.total_steps),
                    timings: Some(run.timings),
                    error: None,
                },
            )?;
            HFSample {
                id,
                mu_b: mu,
                mu_cl,
                label: Some(label),
                converged: true,
                runtime_s,
                u_h: Some(run.u_h),
                error: None,
            }
        }
        Err(e) => {
            warn!("sample {id} failed: {e}");
            let (ke, steps) = match e {
                Error::NonConvergence { steps, kinetic_energy } => (Some(kinetic_energy), Some(steps)),
                _ => (None, None),
            };
            write_json(
                &tmp.join("label.json"),
                &RunRecord {
                    label: None,
                    converged: false,
                    runtime_s,
                    final_kinetic_energy: ke,
                    steps,
                    timings: None,
                    error: Some(e.to_string()),
                },
            )?;
            HFSample {
                id,
                mu_b: mu,
                mu_cl,
                label: None,
                converged: false,
                runtime_s,
                u_h: None,
                error: Some(e.to_string()),
            }
        }
    };
    fs::rename(&tmp, sample_dir(root, id))?;
    Ok(sample)
}

/// Runs (or resumes) a campaign in `root`. Samples already on disk are kept;
/// a failing sample is recorded and the campaign continues. `on_sample` is
/// called from worker threads as samples finish.
pub fn run_campaign(root: &Path, config: &CampaignConfig, on_sample: &(dyn Fn(&HFSample) + Sync)) -> Result<HFDataset> {
    config.validate()?;
    let hash = config.hash()?;
    let manifest_path = root.join("manifest.json");
    if manifest_path.exists() {
        let old: Manifest = read_json(&manifest_path)?;
        if old.config_hash != hash {
            return Err(Error::State(format!(
                "{} holds a campaign with a different configuration (hash {})",
                root.display(),
                old.config_hash
            )));
        }
    }
    fs::create_dir_all(root.join("samples"))?;

    let mesh = generate_stent(&config.stent)?;
    let n_nodes = mesh.nodes.len();
    let deployer = Deployer::new(mesh, config.solver)?;
    let plan = plan_rows(&lhs_plan(&config.space, config.n_samples, config.seed)?)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: *config,
        config_hash: hash,
        n_nodes,
        plan: plan.clone(),
        crimped_centerline: deployer.crimped_path().clone(),
    };
    write_json(&manifest_path, &manifest)?;

    let pending: Vec<usize> = (0..plan.len()).filter(|&id| !sample_dir(root, id).exists()).collect();
    info!("{} of {} samples to run", pending.len(), plan.len());
    pending.par_iter().try_for_each(|&id| -> Result<()> {
        let sample = run_sample(root, &deployer, config, id, plan[id])?;
        on_sample(&sample);
        Ok(())
    })?;
    HFDataset::load(root)
}

impl HFDataset {
    pub fn load(root: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&root.join("manifest.json"))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let mut samples = Vec::new();
        for id in 0..manifest.plan.len() {
            let dir = sample_dir(root, id);
            if !dir.exists() {
                continue;
            }
            let mu: MuRecord = read_json(&dir.join("mu.json"))?;
            let run: RunRecord = read_json(&dir.join("label.json"))?;
            let u_h = if run.converged {
                let u = read_f64_le(&dir.join("u_h.bin"))?;
                if u.len() != 3 * manifest.n_nodes {
                    return Err(Error::Data(format!(
                        "sample {id}: u_h has {} entries, expected {}",
                        u.len(),
                        3 * manifest.n_nodes
                    )));
                }
                Some(u)
            } else {
                None
            };
            samples.push(HFSample {
                id: mu.id,
                mu_b: mu.mu_b,
                mu_cl: mu.mu_cl,
                label: run.label,
                converged: run.converged,
                runtime_s: run.runtime_s,
                u_h,
                error: run.error,
            });
        }
        Ok(Self { manifest, samples })
    }

    /// Indices (into `samples`) of converged samples with a label.
    pub fn labeled(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].converged && self.samples[i].label.is_some()).collect()
    }

    pub fn successes(&self, among: &[usize]) -> Vec<usize> {
        among.iter().copied().filter(|&i| self.samples[i].label == Some(Label::Success)).collect()
    }

    /// Deterministic shuffled split of the labeled samples into
    /// `(train, test)` with `n_test` test samples.
    pub fn split(&self, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut idx = self.labeled();
        if n_test >= idx.len() {
            return Err(Error::Data(format!("cannot hold out {n_test} of {} labeled samples", idx.len())));
        }
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = idx.split_off(idx.len() - n_test);
        Ok((idx, test))
    }

    /// Snapshot matrix: one column per successful sample among `among`, in
    /// that order.
    pub fn assemble_snapshots(&self, among: &[usize]) -> Result<DMatrix<f64>> {
        let cols: Vec<&Vec<f64>> =
            self.successes(among).into_iter().filter_map(|i| self.samples[i].u_h.as_ref()).collect();
        if cols.is_empty() {
            return Err(Error::Data("no successful converged sample to build snapshots from".into()));
        }
        let n_h = cols[0].len();
        Ok(DMatrix::from_fn(n_h, cols.len(), |r, c| cols[c][r]))
    }

    /// Predictor rows for `among`.
    pub fn features(&self, kind: PredictorKind, among: &[usize]) -> Result<DMatrix<f64>> {
        let d = kind.dimension();
        let mut out = DMatrix::zeros(among.len(), d);
        let predictors = self.manifest.predictors(kind);
        for (r, &i) in among.iter().enumerate() {
            let s = &self.samples[i];
            let row = match kind {
                PredictorKind::MuCl { n_cl } if n_cl == self.manifest.config.n_cl => s.mu_cl.clone(),
                _ => predictors.features(&s.mu_b)?,
            };
            for (c, v) in row.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        Ok(out)
    }

    pub fn labels(&self, among: &[usize]) -> Vec<Label> {
        among.iter().map(|&i| self.samples[i].label.unwrap_or(Label::Failure)).collect()
    }
}

/// Packs a campaign directory into a single tar file.
pub fn export_archive(root: &Path, archive: &Path) -> Result<()> {
    let file = BufWriter::new(fs::File::create(archive)?);
    let mut builder = tar::Builder::new(file);
    builder.append_path_with_name(root.join("manifest.json"), "manifest.json")?;
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.join("samples"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = Path::new("samples").join(dir.file_name().expect("sample directory name"));
        builder.append_dir_all(&name, &dir)?;
    }
    builder.into_inner()?.flush()?;
    Ok(())
}

/// Unpacks an archive written by [`export_archive`] into `root`.
pub fn import_archive(archive: &Path, root: &Path) -> Result<HFDataset> {
    fs::create_dir_all(root)?;
    tar::Archive::new(fs::File::open(archive)?).unpack(root)?;
    HFDataset::load(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stent::StentSpec;

    #[test]
    fn lhs_fills_every_stratum_once() {
        let u = lhs_unit(4, 6, 3);
        for d in 0..6 {
            let mut strata: Vec<usize> = (0..4).map(|i| (u[(i, d)] * 4.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, vec![0, 1, 2, 3]);
        }
        assert_eq!(lhs_unit(4, 6, 3), u);
    }

    #[test]
    fn plan_respects_ranges() {
        let space = ParamSpace::default();
        let plan = lhs_plan(&space, 50, 11).unwrap();
        for mu in plan_rows(&plan).unwrap() {
            let [y_p1, z_p1, d_v, d_a, y_ca, eta] = mu.0;
            assert!((0.0..=8.0).contains(&y_p1) && (8.0..=12.0).contains(&z_p1));
            assert!((2.0..=4.0).contains(&d_v) && (5.0..=10.0).contains(&d_a));
            let [lo, hi] = space.neck.interval(d_v, d_a);
            assert!(y_ca >= lo && y_ca <= hi);
            assert!((0.25..=0.55).contains(&eta));
        }
        assert!(lhs_plan(&space, 1, 0).is_err());
    }

    #[test]
    fn inverted_range_is_a_config_error() {
        let space = ParamSpace { d_v: [4.0, 2.0], ..Default::default() };
        assert!(matches!(lhs_plan(&space, 5, 0), Err(Error::Config(_))));
    }

    #[test]
    fn sub_plan_beats_random_subsets() {
        let plan = lhs_plan(&ParamSpace::default(), 60, 5).unwrap();
        let n = 12;
        let sub = sub_plan(&plan, n, 1).unwrap();
        let scale: Vec<(f64, f64)> = plan.column_iter().map(|c| (c.min(), c.max() - c.min())).collect();
        let norm = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| (0..6).map(|d| (m[(i, d)] - scale[d].0) / scale[d].1).collect()).collect()
        };
        let all: Vec<usize> = (0..n).collect();
        let ours = min_pairwise(&norm(&sub), &all);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut random: Vec<f64> = (0..20)
            .map(|_| {
                let mut idx: Vec<usize> = (0..60).collect();
                idx.shuffle(&mut rng);
                let m = DMatrix::from_fn(n, 6, |i, d| plan[(idx[i], d)]);
                min_pairwise(&norm(&m), &all)
            })
            .collect();
        random.sort_by(f64::total_cmp);
        assert!(ours >= random[10], "{ours} vs median {}", random[10]);
        // every subset row is a plan row
        for i in 0..n {
            assert!((0..60).any(|j| (0..6).all(|d| plan[(j, d)] == sub[(i, d)])));
        }
        assert!(matches!(sub_plan(&plan, 60, 0), Err(Error::Argument(_))));
        assert_eq!(sub_plan(&plan, 1, 0).unwrap().nrows(), 1);
    }

    fn vessel() -> VesselModel {
        VesselModel::from_params(
            &VesselParams { y_p1: 4.0, z_p1: 10.0, d_v: 3.0, d_a: 7.0, y_ca: 4.0 },
            &VesselFrame::default(),
        )
        .unwrap()
    }

    #[test]
    fn extremity_node_at_the_aneurysm_center_fails() {
        let mesh = generate_stent(&StentSpec { n_wires: 8, n_cells: 4, ..StentSpec::default() }).unwrap();
        let v = vessel();
        let far: Vec<Point3<f64>> = mesh.nodes.iter().map(|p| p + nalgebra::Vector3::new(0.0, -50.0, 0.0)).collect();
        assert_eq!(label_outcome(&mesh, &far, &v), Label::Success);
        let mut bad = far.clone();
        bad[mesh.rings[0][0]] = v.c_a;
        assert_eq!(label_outcome(&mesh, &bad, &v), Label::Failure);
        // interior rings do not count
        let mut inner = far;
        inner[mesh.rings[2][0]] = v.c_a;
        assert_eq!(label_outcome(&mesh, &inner, &v), Label::Success);
    }

    #[test]
    fn mu_cl_layout() {
        let v = vessel();
        let ct = CenterlinePath::new((0..10).map(|i| Point3::new(0.0, 0.0, i as f64)).collect()).unwrap();
        for (n, len) in [(3, 9), (5, 13), (8, 19)] {
            let mu = extract_mu_cl(&ct, n, &v).unwrap();
            assert_eq!(mu.len(), len);
            assert!(mu[..2 * n].chunks(2).all(|q| q[0] == 0.0));
            assert_eq!(mu[1], 0.0);
            assert!((mu[2 * n - 1] - 9.0).abs() < 1e-9);
            assert_eq!(&mu[2 * n..], &[3.0, 7.0, aneurysm_offset(&v)]);
        }
        assert!((aneurysm_offset(&v) - 4.0).abs() < 1e-12);
        assert!(matches!(extract_mu_cl(&ct, 1, &v), Err(Error::Argument(_))));
    }

    #[test]
    fn f64_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let v = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300];
        write_f64_le(&p, &v).unwrap();
        assert_eq!(read_f64_le(&p).unwrap(), v);
        assert_eq!(fs::metadata(&p).unwrap().len(), 32);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = CampaignConfig::default();
        let b = CampaignConfig { seed: 2, ..a };
        assert_eq!(a.hash().unwrap(), a.hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
