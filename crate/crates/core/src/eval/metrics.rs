use std::fmt;

use thiserror::Error;

use crate::dataset::Label;

/// Counts with malicious as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Malicious, Label::Malicious) => self.tp += 1,
            (Label::Benign, Label::Benign) => self.tn += 1,
            (Label::Benign, Label::Malicious) => self.fp += 1,
            (Label::Malicious, Label::Benign) => self.fn_ += 1,
        }
    }

    /// Pairs `truth` and `predicted` positionally.
    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "label lists differ in length");
        let mut cm = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p);
        }
        cm
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} tn={} fp={} fn={}", self.tp, self.tn, self.fp, self.fn_)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the matching ratio had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    EmptyEvaluation,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Accuracy, precision, recall `tp/(tp+fn)` and their harmonic mean.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let accuracy = (tp + tn) / total as f64;
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let (f1, f1_undefined) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * (precision * recall) / (precision + recall), false)
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_counts() {
        let m = compute_metrics(&ConfusionMatrix::new(3, 3, 1, 1)).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.75, 0.75, 0.75, 0.75));
    }

    #[test]
    fn perfect() {
        let m = compute_metrics(&ConfusionMatrix::new(1, 1, 0, 0)).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.precision_undefined && !m.recall_undefined && !m.f1_undefined);
    }

    #[test]
    fn undefined_precision() {
        let m = compute_metrics(&ConfusionMatrix::new(0, 4, 0, 2)).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.precision_undefined);
        assert!(!m.recall_undefined);
        assert!(m.f1_undefined);
    }

    #[test]
    fn empty() {
        assert_eq!(
            compute_metrics(&ConfusionMatrix::default()),
            Err(MetricsError::EmptyEvaluation)
        );
    }

    #[test]
    fn from_labels_counts() {
        use Label::*;
        let cm = ConfusionMatrix::from_labels(
            &[Malicious, Malicious, Benign, Benign, Benign],
            &[Malicious, Benign, Benign, Malicious, Benign],
        );
        assert_eq!(cm, ConfusionMatrix::new(1, 2, 1, 1));
    }
}
