//! generate → train → predict, shared by the command line and the service.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use stentrom::dataset::{run_campaign, HFDataset, HFSample, Label, MuB, ParamSpace, PredictorKind};
use stentrom::stent::StentSpec;
use stentrom::vessel::VesselFrame;
use stentrom::{Error, Result};
use stentrom_classify::{
    labels_to_classes, majority_baseline, report_table, train_bank, ClassifierKind, ClassifierReport, TrainedClassifier,
};
use stentrom_rom::{aggregate, nodal_errors, ErrorSummary, ReducedModel, IMAGING_THRESHOLDS};

use crate::config::PipelineConfig;

/// Version of every JSON document written or served.
pub const SCHEMA_VERSION: u32 = 1;

const INDEX_FILE: &str = "index.json";
const ROM_FILE: &str = "rom.bin";

fn classifier_file(kind: ClassifierKind) -> String {
    format!("classifier-{}.bin", kind.short_name())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

/// Runs or resumes the campaign of `cfg`, calling `progress(sample, done, total)`.
pub fn generate(cfg: &PipelineConfig, progress: &(dyn Fn(&HFSample, usize, usize) + Sync)) -> Result<HFDataset> {
    cfg.validate()?;
    let total = cfg.campaign.n_samples;
    let done = AtomicUsize::new(0);
    let dataset = run_campaign(&cfg.paths.dataset, &cfg.campaign, &|s| {
        progress(s, done.fetch_add(1, Ordering::Relaxed) + 1, total);
    })?;
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub rank: usize,
    pub ae_rb: f64,
    pub ae_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n_train: usize,
    pub n_test: usize,
    /// Held-out share of the more frequent held-out class.
    pub majority_baseline: Option<f64>,
    pub gate: String,
    pub classifiers: Vec<ClassifierReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub predictors: String,
    pub n_train: usize,
    pub n_test: usize,
    pub rank: usize,
    pub eps_pod: f64,
    pub singular_values: Vec<f64>,
    pub errors: Option<ErrorSummary>,
    pub rank_sweep: Vec<RankPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub dataset_hash: String,
    pub n_labeled: usize,
    pub n_success: usize,
    pub classification: ClassificationReport,
    pub regression: RegressionReport,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let c = &self.classification;
        let r = &self.regression;
        let mut s = format!(
            "labeled samples: {} ({} successes)\n\nclassification: {} train / {} test, gate {}\n",
            self.n_labeled, self.n_success, c.n_train, c.n_test, c.gate
        );
        if let Some(b) = c.majority_baseline {
            s += &format!("majority baseline accuracy: {:.1}%\n", 100.0 * b);
        }
        s += &report_table(&c.classifiers);
        s += &format!(
            "\nregression ({}): {} train / {} test, L = {}, eps_pod = {:.3e}\n",
            r.predictors, r.n_train, r.n_test, r.rank, r.eps_pod
        );
        if let Some(e) = &r.errors {
            s += &e.to_table("held-out errors");
        }
        if !r.rank_sweep.is_empty() {
            s += &format!("{:>4} {:>12} {:>12}\n", "L", "AE_rb [mm]", "AE_p [mm]");
            for p in &r.rank_sweep {
                s += &format!("{:>4} {:>12.5} {:>12.5}\n", p.rank, p.ae_rb, p.ae_p);
            }
        }
        s
    }
}

/// What `models/index.json` records about a trained bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub schema_version: u32,
    pub dataset_hash: String,
    pub gate: String,
    pub classifiers: Vec<String>,
    pub rank: usize,
    pub n_nodes: usize,
    pub predictors: PredictorKind,
    pub space: ParamSpace,
    pub stent: StentSpec,
    pub frame: VesselFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub index: ModelIndex,
    pub rom: ReducedModel,
    pub classifiers: Vec<TrainedClassifier>,
}

impl ModelBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.rom.save(&dir.join(ROM_FILE))?;
        for c in &self.classifiers {
            c.save(&dir.join(classifier_file(c.kind)))?;
        }
        write_json(&dir.join(INDEX_FILE), &self.index)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let bytes = fs::read(&index_path).map_err(|e| Error::Data(format!("{}: {e}", index_path.display())))?;
        let index: ModelIndex =
            serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", index_path.display())))?;
        if index.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("model index version {} is not supported", index.schema_version)));
        }
        let rom = ReducedModel::load(&dir.join(ROM_FILE))?;
        let classifiers = index
            .classifiers
            .iter()
            .map(|name| {
                let kind = ClassifierKind::from_short_name(name).map_err(|e| Error::Format(e.to_string()))?;
                TrainedClassifier::load(&dir.join(classifier_file(kind)))
            })
            .collect::<Result<Vec<_>>>()?;
        let bundle = Self { index, rom, classifiers };
        bundle.gate()?;
        if bundle.rom.n_dof() != 3 * bundle.index.n_nodes {
            return Err(Error::Format("reduced model does not match the stent of the index".into()));
        }
        Ok(bundle)
    }

    /// The classifier deciding whether a regression is worth running.
    pub fn gate(&self) -> Result<&TrainedClassifier> {
        self.classifiers
            .iter()
            .find(|c| c.kind.short_name() == self.index.gate)
            .ok_or_else(|| Error::Format(format!("gate classifier {} is missing", self.index.gate)))
    }
}

fn choose_gate(cfg: &PipelineConfig, reports: &[ClassifierReport]) -> Result<ClassifierKind> {
    if let Some(name) = &cfg.train.gate {
        return ClassifierKind::from_short_name(name);
    }
    // among equally accurate models prefer few false positives, since the
    // costly mistake is deploying into the sac
    let key = |r: &ClassifierReport| (r.metrics.accuracy.unwrap_or(-1.0), r.metrics.specificity.unwrap_or(-1.0));
    let best = reports.iter().fold(None::<&ClassifierReport>, |best, r| match best {
        Some(b) if key(b) >= key(r) => Some(b),
        _ => Some(r),
    });
    Ok(best.map_or(ClassifierKind::SupportVectorMachine, |r| r.kind))
}

/// Held-out errors of `model` on the given samples.
fn rom_errors(model: &ReducedModel, ds: &HFDataset, kind: PredictorKind, test: &[usize]) -> Result<ErrorSummary> {
    let x = ds.features(kind, test)?;
    let mut reports = Vec::with_capacity(test.len());
    for (r, &i) in test.iter().enumerate() {
        let u_h = ds.samples[i].u_h.as_ref().ok_or_else(|| Error::Data(format!("sample {i} has no solution")))?;
        let features: Vec<f64> = x.row(r).iter().copied().collect();
        let p = model.predict(&features)?;
        let u_rb = model.basis.reconstruct(&model.basis.project(&DVector::from_column_slice(u_h))?)?;
        reports.push(nodal_errors(u_h, u_rb.as_slice(), p.u_p.as_slice())?);
    }
    let thresholds: Vec<f64> = IMAGING_THRESHOLDS.iter().map(|&(_, t)| t).collect();
    aggregate(&reports, &thresholds)
}

/// Trains the classifier bank on the labeled training split and the reduced
/// model on its successes; the held-out split feeds the report.
pub fn train(cfg: &PipelineConfig, ds: &HFDataset) -> Result<(ModelBundle, TrainReport)> {
    cfg.validate()?;
    let labeled = ds.labeled();
    let n_success = ds.successes(&labeled).len();
    if n_success < 2 || n_success == labeled.len() {
        return Err(Error::Data(format!(
            "training needs at least two successes and one failure; the dataset has {n_success} of {} labeled",
            labeled.len()
        )));
    }
    let (train_idx, test_idx) = if cfg.train.n_test == 0 {
        (labeled.clone(), vec![])
    } else {
        ds.split(cfg.train.n_test, cfg.train.split_seed)?
    };

    // classification on the deployment parameters
    let mu_b = ds.manifest.predictors(PredictorKind::MuB);
    let x_train = ds.features(PredictorKind::MuB, &train_idx)?;
    let y_train = labels_to_classes(&ds.labels(&train_idx));
    let classifiers: Vec<TrainedClassifier> =
        train_bank(&x_train, &y_train, &cfg.classifier)?.into_iter().map(|c| c.with_predictors(mu_b.clone())).collect();
    let mut class_reports = Vec::new();
    let mut baseline = None;
    if !test_idx.is_empty() {
        let x_test = ds.features(PredictorKind::MuB, &test_idx)?;
        let y_test = labels_to_classes(&ds.labels(&test_idx));
        for c in &classifiers {
            class_reports.push(c.evaluate(&x_test, &y_test)?);
        }
        baseline = Some(majority_baseline(&y_test));
    }
    let gate = choose_gate(cfg, &class_reports)?;

    // regression on the successes
    let kind = cfg.rom.predictor_kind();
    let train_s = ds.successes(&train_idx);
    let test_s = ds.successes(&test_idx);
    if train_s.len() < 2 {
        return Err(Error::Data(format!("only {} successes in the training split", train_s.len())));
    }
    let snapshots = ds.assemble_snapshots(&train_s)?;
    let x_rom = ds.features(kind, &train_s)?;
    let rom_cfg = cfg.rom.rom_config();
    if rom_cfg.rank.is_none() && rom_cfg.eps_pod == 0.0 {
        warn!("eps_pod = 0 keeps every mode of the snapshot matrix");
    }
    let predictors = ds.manifest.predictors(kind);
    let rom = ReducedModel::train(&snapshots, &x_rom, predictors.clone(), &rom_cfg)?;
    info!("reduced model: {} modes from {} snapshots", rom.rank(), train_s.len());

    let errors = if test_s.is_empty() { None } else { Some(rom_errors(&rom, ds, kind, &test_s)?) };
    let mut rank_sweep = Vec::new();
    let sweep_max = cfg.train.rank_sweep.iter().copied().max().unwrap_or(0).min(train_s.len());
    if !test_s.is_empty() && sweep_max > 0 {
        let sweep_cfg = stentrom_rom::RomConfig { rank: Some(sweep_max), ..rom_cfg };
        let full = if rom.rank() >= sweep_max {
            rom.clone()
        } else {
            ReducedModel::train(&snapshots, &x_rom, predictors, &sweep_cfg)?
        };
        let mut ranks: Vec<usize> =
            cfg.train.rank_sweep.iter().copied().filter(|&l| l > 0 && l <= full.rank()).collect();
        ranks.sort_unstable();
        ranks.dedup();
        for l in ranks {
            let e = rom_errors(&full.truncated(l)?, ds, kind, &test_s)?;
            rank_sweep.push(RankPoint { rank: l, ae_rb: e.ae_rb.mean, ae_p: e.ae_p.mean });
        }
    }

    let report = TrainReport {
        schema_version: SCHEMA_VERSION,
        dataset_hash: ds.manifest.config_hash.clone(),
        n_labeled: labeled.len(),
        n_success,
        classification: ClassificationReport {
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            majority_baseline: baseline,
            gate: gate.short_name().into(),
            classifiers: class_reports,
        },
        regression: RegressionReport {
            predictors: kind.name(),
            n_train: train_s.len(),
            n_test: test_s.len(),
            rank: rom.rank(),
            eps_pod: rom.basis.eps_pod,
            singular_values: rom.basis.singular_values.iter().copied().collect(),
            errors,
            rank_sweep,
        },
    };
    let config = &ds.manifest.config;
    let bundle = ModelBundle {
        index: ModelIndex {
            schema_version: SCHEMA_VERSION,
            dataset_hash: ds.manifest.config_hash.clone(),
            gate: gate.short_name().into(),
            classifiers: classifiers.iter().map(|c| c.kind.short_name().to_string()).collect(),
            rank: rom.rank(),
            n_nodes: ds.manifest.n_nodes,
            predictors: kind,
            space: config.space,
            stent: config.stent,
            frame: config.frame,
        },
        rom,
        classifiers,
    };
    Ok((bundle, report))
}

/// Writes the models and the JSON and text reports.
pub fn write_training(cfg: &PipelineConfig, bundle: &ModelBundle, report: &TrainReport) -> Result<()> {
    bundle.save(&cfg.paths.models)?;
    write_json(&cfg.paths.reports.join("train.json"), report)?;
    fs::write(cfg.paths.reports.join("train.txt"), report.to_text())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub schema_version: u32,
    pub label: Label,
    pub score: f64,
    pub classifier: String,
    /// Whether every parameter lies in the training ranges.
    pub in_range: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_std: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<f64>>>,
    /// Set when a regression was forced on a predicted failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PredictOptions {
    /// Run the regression even when a failure is predicted.
    pub force: bool,
    /// Posterior draws to include.
    pub samples: usize,
    pub seed: u64,
}

pub fn in_range(space: &ParamSpace, mu: &MuB) -> bool {
    let [y_p1, z_p1, d_v, d_a, y_ca, eta] = mu.0;
    let within = |v: f64, r: [f64; 2]| v >= r[0] && v <= r[1];
    within(y_p1, space.y_p1)
        && within(z_p1, space.z_p1)
        && within(d_v, space.d_v)
        && within(d_a, space.d_a)
        && within(eta, space.eta)
        && within(y_ca, space.neck.interval(d_v, d_a))
}

/// Classifies `mu` and, on a predicted success (or when forced), predicts the
/// deployed displacements.
pub fn predict(bundle: &ModelBundle, mu: &MuB, opts: PredictOptions) -> Result<PredictOutput> {
    let t0 = Instant::now();
    if mu.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("parameters must be finite".into()));
    }
    let gate = bundle.gate()?;
    let decision = gate.predict(&mu.0)?;
    let run = decision.label == Label::Success || opts.force;
    let mut out = PredictOutput {
        schema_version: SCHEMA_VERSION,
        label: decision.label,
        score: decision.score,
        classifier: gate.kind.short_name().into(),
        in_range: in_range(&bundle.index.space, mu),
        u_p: None,
        node_std: None,
        samples: None,
        warning: None,
        latency_ms: 0.0,
    };
    if run {
        let p = bundle.rom.predict_mu(mu)?;
        if opts.samples > 0 {
            let draws = bundle.rom.sample_posterior(&p, opts.samples, opts.seed);
            out.samples = Some(draws.into_iter().map(|d| d.as_slice().to_vec()).collect());
        }
        out.u_p = Some(p.u_p.as_slice().to_vec());
        out.node_std = Some(p.node_std);
        if decision.label == Label::Failure {
            out.warning = Some("deployment predicted to fail; regression output forced".into());
        }
    }
    out.latency_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}
