//! Confusion-matrix metrics and ROC analysis. Class 1 (success) is positive.

use serde::{Deserialize, Serialize};
use stentrom::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension { expected: truth.len(), actual: predicted.len() });
        }
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == 1, p == 1) {
                (true, true) => cm.tp += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (true, false) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(self.tp, self.tp + self.fp);
        let sensitivity = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (precision, sensitivity) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            sensitivity,
            specificity: ratio(self.tn, self.tn + self.fp),
            precision,
            f1,
        }
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(false positive rate, true positive rate)` from the strictest
    /// threshold down to the loosest, starting at (0, 0).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over all score thresholds; tied scores cross the threshold
/// together. AUC by the trapezoidal rule.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<Roc> {
    if scores.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), actual: scores.len() });
    }
    let positives = truth.iter().filter(|&&t| t == 1).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Data("AUC is undefined when only one class is present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / negatives as f64, tp as f64 / positives as f64);
        auc += (x1 - x0) * 0.5 * (y0 + y1);
        points.push((x1, y1));
    }
    Ok(Roc { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(tp: usize, fn_: usize, tn: usize, fp: usize) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    #[test]
    fn perfect_classifier() {
        let m = cm(10, 0, 10, 0).metrics();
        for v in [m.accuracy, m.sensitivity, m.specificity, m.precision, m.f1] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn hand_counted_matrix() {
        let m = cm(3, 1, 4, 2).metrics();
        assert!((m.accuracy.unwrap() - 0.7).abs() < 1e-15);
        assert!((m.sensitivity.unwrap() - 0.75).abs() < 1e-15);
        assert!((m.specificity.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.precision.unwrap() - 0.6).abs() < 1e-15);
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = cm(0, 0, 5, 0).metrics();
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(ConfusionMatrix::default().metrics().accuracy, None);
    }

    #[test]
    fn counts_from_labels() {
        let c = ConfusionMatrix::from_labels(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1]).unwrap();
        assert_eq!(c, cm(2, 1, 1, 1));
        assert!(ConfusionMatrix::from_labels(&[1], &[]).is_err());
    }

    #[test]
    fn separated_and_constant_scores() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap().auc, 0.0);
        let flat = roc_auc(&[0.5; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::Data(_))));
    }
}
