//! Binary classifiers predicting whether a deployment succeeds, with
//! confusion-matrix metrics and ROC analysis.

pub mod metrics;
pub mod models;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use stentrom::container::{BinReader, BinWriter};
use stentrom::dataset::{Label, Predictors};
use stentrom::standardize::Standardizer;
use stentrom::{Error, Result};

pub use metrics::{roc_auc, ConfusionMatrix, Metrics, Roc};
use models::{
    DecisionTree, Logistic, LogisticConfig, NaiveBayes, NearestNeighbors, NetworkConfig, NeuralNetwork,
    SupportVectorMachine, SvmConfig, TreeConfig,
};

const KIND: &str = "classifier";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logistic,
    NearestNeighbors,
    NaiveBayes,
    DecisionTree,
    NeuralNetwork,
    SupportVectorMachine,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Logistic,
        ClassifierKind::NearestNeighbors,
        ClassifierKind::NaiveBayes,
        ClassifierKind::DecisionTree,
        ClassifierKind::NeuralNetwork,
        ClassifierKind::SupportVectorMachine,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "LR",
            ClassifierKind::NearestNeighbors => "kNN",
            ClassifierKind::NaiveBayes => "NB",
            ClassifierKind::DecisionTree => "DT",
            ClassifierKind::NeuralNetwork => "ANN",
            ClassifierKind::SupportVectorMachine => "SVM",
        }
    }

    pub fn from_short_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.short_name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Argument(format!("unknown classifier {name:?}")))
    }

    /// Score at which the hard label switches to success.
    pub fn default_threshold(self) -> f64 {
        match self {
            ClassifierKind::SupportVectorMachine => 0.0,
            _ => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub logistic: LogisticConfig,
    pub knn_k: usize,
    pub tree: TreeConfig,
    pub network: NetworkConfig,
    pub svm: SvmConfig,
    /// Score thresholds overriding the per-kind defaults, keyed by short name.
    pub thresholds: std::collections::BTreeMap<String, f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            logistic: LogisticConfig::default(),
            knn_k: 5,
            tree: TreeConfig::default(),
            network: NetworkConfig::default(),
            svm: SvmConfig::default(),
            thresholds: Default::default(),
        }
    }
}

impl ClassifierConfig {
    fn threshold(&self, kind: ClassifierKind) -> f64 {
        self.thresholds.get(kind.short_name()).copied().unwrap_or_else(|| kind.default_threshold())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Logistic(Logistic),
    NearestNeighbors(NearestNeighbors),
    NaiveBayes(NaiveBayes),
    DecisionTree(DecisionTree),
    NeuralNetwork(NeuralNetwork),
    SupportVectorMachine(SupportVectorMachine),
}

/// A fitted classifier with the standardization of its training split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub scaler: Standardizer,
    pub threshold: f64,
    /// How raw deployment parameters become the feature vector.
    pub predictors: Option<Predictors>,
    model: Model,
}

fn check_set(x: &DMatrix<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), actual: y.len() });
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Data("training data contains a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("training features have non-finite entries".into()));
    }
    Ok(())
}

pub fn labels_to_classes(labels: &[Label]) -> Vec<u8> {
    labels.iter().map(|l| l.as_class()).collect()
}

/// Fits `kind` on raw (unstandardized) features.
pub fn train(kind: ClassifierKind, x: &DMatrix<f64>, y: &[u8], cfg: &ClassifierConfig) -> Result<TrainedClassifier> {
    check_set(x, y)?;
    let scaler = Standardizer::fit(x);
    let z = scaler.apply_rows(x);
    let model = match kind {
        ClassifierKind::Logistic => Model::Logistic(Logistic::fit(&z, y, &cfg.logistic)?),
        ClassifierKind::NearestNeighbors => Model::NearestNeighbors(NearestNeighbors::fit(&z, y, cfg.knn_k)?),
        ClassifierKind::NaiveBayes => Model::NaiveBayes(NaiveBayes::fit(&z, y)?),
        ClassifierKind::DecisionTree => Model::DecisionTree(DecisionTree::fit(&z, y, &cfg.tree)?),
        ClassifierKind::NeuralNetwork => Model::NeuralNetwork(NeuralNetwork::fit(&z, y, &cfg.network)?),
        ClassifierKind::SupportVectorMachine => {
            Model::SupportVectorMachine(SupportVectorMachine::fit(&z, y, &cfg.svm)?)
        }
    };
    Ok(TrainedClassifier { kind, scaler, threshold: cfg.threshold(kind), predictors: None, model })
}

pub fn train_bank(x: &DMatrix<f64>, y: &[u8], cfg: &ClassifierConfig) -> Result<Vec<TrainedClassifier>> {
    ClassifierKind::ALL.iter().map(|&k| train(k, x, y, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Label,
    pub score: f64,
}

impl TrainedClassifier {
    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn with_predictors(mut self, predictors: Predictors) -> Self {
        self.predictors = Some(predictors);
        self
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), actual: x.len() });
        }
        let z = self.scaler.apply(x);
        Ok(match &self.model {
            Model::Logistic(m) => m.score(&z),
            Model::NearestNeighbors(m) => m.score(&z),
            Model::NaiveBayes(m) => m.score(&z),
            Model::DecisionTree(m) => m.score(&z),
            Model::NeuralNetwork(m) => m.score(&z),
            Model::SupportVectorMachine(m) => m.score(&z),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Decision> {
        let score = self.score(x)?;
        let label = if score >= self.threshold { Label::Success } else { Label::Failure };
        Ok(Decision { label, score })
    }

    pub fn evaluate(&self, x: &DMatrix<f64>, y: &[u8]) -> Result<ClassifierReport> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension { expected: x.nrows(), actual: y.len() });
        }
        let mut scores = Vec::with_capacity(y.len());
        let mut predicted = Vec::with_capacity(y.len());
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let d = self.predict(&row)?;
            scores.push(d.score);
            predicted.push(d.label.as_class());
        }
        let confusion = ConfusionMatrix::from_labels(y, &predicted)?;
        let roc = roc_auc(&scores, y).ok();
        Ok(ClassifierReport { kind: self.kind, confusion, metrics: confusion.metrics(), roc })
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BinWriter::new(w, KIND)?;
        out.str(self.kind.short_name())?;
        out.str(&serde_json::to_string(&self.predictors).map_err(stentrom::Error::from)?)?;
        out.f64s(&self.scaler.mean)?;
        out.f64s(&self.scaler.scale)?;
        out.f64(self.threshold)?;
        match &self.model {
            Model::Logistic(m) => m.write(&mut out)?,
            Model::NearestNeighbors(m) => m.write(&mut out)?,
            Model::NaiveBayes(m) => m.write(&mut out)?,
            Model::DecisionTree(m) => m.write(&mut out)?,
            Model::NeuralNetwork(m) => m.write(&mut out)?,
            Model::SupportVectorMachine(m) => m.write(&mut out)?,
        }
        out.finish()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut input = BinReader::new(r, KIND)?;
        let kind = ClassifierKind::from_short_name(&input.str()?).map_err(|e| Error::Format(e.to_string()))?;
        let predictors: Option<Predictors> =
            serde_json::from_str(&input.str()?).map_err(|e| Error::Format(format!("predictor block: {e}")))?;
        let scaler = Standardizer { mean: input.f64s()?, scale: input.f64s()? };
        if scaler.mean.len() != scaler.scale.len() {
            return Err(Error::Format("standardizer lengths differ".into()));
        }
        let threshold = input.f64()?;
        let model = match kind {
            ClassifierKind::Logistic => Model::Logistic(Logistic::read(&mut input)?),
            ClassifierKind::NearestNeighbors => Model::NearestNeighbors(NearestNeighbors::read(&mut input)?),
            ClassifierKind::NaiveBayes => Model::NaiveBayes(NaiveBayes::read(&mut input)?),
            ClassifierKind::DecisionTree => Model::DecisionTree(DecisionTree::read(&mut input)?),
            ClassifierKind::NeuralNetwork => Model::NeuralNetwork(NeuralNetwork::read(&mut input)?),
            ClassifierKind::SupportVectorMachine => {
                Model::SupportVectorMachine(SupportVectorMachine::read(&mut input)?)
            }
        };
        Ok(Self { kind, scaler, threshold, predictors, model })
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub kind: ClassifierKind,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// Absent when the test set holds a single class.
    pub roc: Option<Roc>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Plain-text table with one row per classifier, metrics in percent.
pub fn report_table(reports: &[ClassifierReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>13}",
        "model", "accuracy", "sensitiv", "specific", "precision", "f1", "auc", "tp/fp/tn/fn"
    );
    for r in reports {
        let m = &r.metrics;
        let c = &r.confusion;
        let _ = writeln!(
            s,
            "{:<5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>13}",
            r.kind.short_name(),
            cell(m.accuracy),
            cell(m.sensitivity),
            cell(m.specificity),
            cell(m.precision),
            cell(m.f1),
            r.roc.as_ref().map_or_else(|| "n/a".to_string(), |roc| format!("{:.3}", roc.auc)),
            format!("{}/{}/{}/{}", c.tp, c.fp, c.tn, c.fn_),
        );
    }
    s
}

/// Accuracy of always predicting the more frequent class.
pub fn majority_baseline(y: &[u8]) -> f64 {
    let pos = y.iter().filter(|&&v| v == 1).count();
    pos.max(y.len() - pos) as f64 / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> (DMatrix<f64>, Vec<u8>) {
        let x = DMatrix::from_fn(20, 2, |i, j| {
            let side = if i < 10 { -2.0 } else { 2.0 };
            side + 0.3 * ((i * 3 + j * 5) % 7) as f64 / 7.0 + 10.0 * j as f64
        });
        let y = (0..20).map(|i| (i >= 10) as u8).collect();
        (x, y)
    }

    #[test]
    fn single_class_is_rejected() {
        let x = DMatrix::zeros(4, 2);
        for kind in ClassifierKind::ALL {
            assert!(matches!(train(kind, &x, &[1, 1, 1, 1], &ClassifierConfig::default()), Err(Error::Data(_))));
        }
    }

    #[test]
    fn every_kind_round_trips_through_bytes() {
        let (x, y) = two_blobs();
        for c in train_bank(&x, &y, &ClassifierConfig::default()).unwrap() {
            let mut bytes = Vec::new();
            c.write(&mut bytes).unwrap();
            let back = TrainedClassifier::read(bytes.as_slice()).unwrap();
            assert_eq!(back, c, "{:?}", c.kind);
            assert!(c.predict(&[1.0]).is_err());
        }
    }

    #[test]
    fn standardization_uses_training_statistics() {
        let (x, y) = two_blobs();
        let c = train(ClassifierKind::Logistic, &x, &y, &ClassifierConfig::default()).unwrap();
        assert_eq!(c.scaler, Standardizer::fit(&x));
    }

    #[test]
    fn threshold_override_and_table() {
        let (x, y) = two_blobs();
        let mut cfg = ClassifierConfig::default();
        cfg.thresholds.insert("LR".into(), 1.1);
        let c = train(ClassifierKind::Logistic, &x, &y, &cfg).unwrap();
        let report = c.evaluate(&x, &y).unwrap();
        assert_eq!(report.confusion.tp + report.confusion.fp, 0);
        assert_eq!(report.metrics.precision, None);
        assert!(report_table(&[report]).contains("n/a"));
        assert_eq!(majority_baseline(&[1, 1, 0]), 2.0 / 3.0);
    }
}
