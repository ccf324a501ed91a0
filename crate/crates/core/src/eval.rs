//! Confusion matrices, per-class reports and before/after shift comparison.
//!
//! Label 1 is the positive class. A precision or recall whose denominator is
//! zero is reported as 0 so one-class predictors still get complete reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::domain(format!("{} predictions vs {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::domain("confusion matrix of an empty set"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (p != 0, y != 0) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelMetrics {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl LabelMetrics {
    fn new(hit: u64, predicted: u64, actual: u64) -> Self {
        let precision = ratio(hit, predicted);
        let recall = ratio(hit, actual);
        LabelMetrics { precision, recall, f1: f1_score(precision, recall), support: actual }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub accuracy: f64,
    /// Indexed by label.
    pub per_label: [LabelMetrics; 2],
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::domain("classification report of an empty confusion matrix"));
    }
    let zero = LabelMetrics::new(cm.tn, cm.tn + cm.fn_, cm.tn + cm.fp);
    let one = LabelMetrics::new(cm.tp, cm.tp + cm.fp, cm.tp + cm.fn_);
    Ok(ClassReport { accuracy: (cm.tp + cm.tn) as f64 / total as f64, per_label: [zero, one] })
}

/// Accuracy and per-label metrics in one call.
pub fn evaluate(preds: &[u8], labels: &[u8]) -> Result<ClassReport> {
    classification_report(&confusion(preds, labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub model: String,
    pub optimizer: String,
    pub test1: ClassReport,
    pub test2: ClassReport,
    pub delta_accuracy: f64,
    pub delta: [MetricDelta; 2],
    /// `Some(true)` when label-1 precision fell less than label-0 precision;
    /// `None` when the two changes are equal.
    pub label1_more_robust: Option<bool>,
}

pub fn shift_report(test1: &ClassReport, test2: &ClassReport, model: &str, optimizer: &str) -> ShiftReport {
    let delta = [0, 1].map(|l| {
        let (a, b) = (&test1.per_label[l], &test2.per_label[l]);
        MetricDelta { precision: b.precision - a.precision, recall: b.recall - a.recall, f1: b.f1 - a.f1 }
    });
    let (d0, d1) = (delta[0].precision, delta[1].precision);
    let label1_more_robust = if d1 == d0 { None } else { Some(d1 > d0) };
    ShiftReport {
        model: model.to_string(),
        optimizer: optimizer.to_string(),
        test1: *test1,
        test2: *test2,
        delta_accuracy: test2.accuracy - test1.accuracy,
        delta,
        label1_more_robust,
    }
}

/// Fixed three-decimal rendering used in every emitted report.
pub fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report_with(p0: f64, p1: f64, acc: f64) -> ClassReport {
        let m = |p| LabelMetrics { precision: p, recall: 0.5, f1: f1_score(p, 0.5), support: 10 };
        ClassReport { accuracy: acc, per_label: [m(p0), m(p1)] }
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (2, 1, 0, 0));
        let cm = confusion(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (2, 2, 0, 0));
        let labels = [1, 0, 0, 1, 1];
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let cm = confusion(&flipped, &labels).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn report_examples() {
        let r = evaluate(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for m in r.per_label {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        let r = evaluate(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!((r.per_label[1].precision, r.per_label[1].recall), (0.5, 1.0));
        assert!((r.per_label[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_label[0], LabelMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 2 });
        assert!(classification_report(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn published_f1_arithmetic() {
        assert!((f1_score(0.762, 0.836) - 0.798).abs() <= 0.001);
    }

    #[test]
    fn shift_examples() {
        let r = report_with(0.9, 0.8, 0.7);
        let s = shift_report(&r, &r, "lgb", "random");
        assert_eq!(s.delta_accuracy, 0.0);
        assert_eq!(s.label1_more_robust, None);
        assert!(s.delta.iter().all(|d| d.precision == 0.0 && d.recall == 0.0 && d.f1 == 0.0));

        let s = shift_report(&report_with(0.985, 0.983, 0.984), &report_with(0.720, 0.762, 0.748), "lgb", "random");
        assert!((s.delta_accuracy + 0.236).abs() < 1e-12);
        assert!((s.delta[1].precision + 0.221).abs() < 1e-12);
        assert!((s.delta[0].precision + 0.265).abs() < 1e-12);
        assert_eq!(s.label1_more_robust, Some(true));
    }

    proptest! {
        #[test]
        fn report_identities(preds in proptest::collection::vec(0u8..2, 1..200), seed in 0u64..1000) {
            let labels: Vec<u8> = preds.iter().enumerate().map(|(i, &p)| if (i as u64 * 7 + seed).is_multiple_of(3) { 1 - p } else { p }).collect();
            let cm = confusion(&preds, &labels).unwrap();
            let r = classification_report(&cm).unwrap();
            prop_assert_eq!(r.accuracy, (cm.tp + cm.tn) as f64 / cm.total() as f64);
            let micro_recall = (r.per_label[0].recall * r.per_label[0].support as f64
                + r.per_label[1].recall * r.per_label[1].support as f64) / cm.total() as f64;
            prop_assert!((micro_recall - r.accuracy).abs() < 1e-12);
            for m in r.per_label {
                prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
                let expect = if m.precision + m.recall > 0.0 { 2.0 * m.precision * m.recall / (m.precision + m.recall) } else { 0.0 };
                prop_assert!((m.f1 - expect).abs() < 1e-15);
            }
        }

        #[test]
        fn shift_deltas_antisymmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
            let (r1, r2) = (report_with(a, b, c), report_with(c, d, a));
            let s = shift_report(&r1, &r2, "m", "o");
            let t = shift_report(&r2, &r1, "m", "o");
            prop_assert_eq!(s.delta_accuracy, -t.delta_accuracy);
            for l in 0..2 {
                prop_assert_eq!(s.delta[l].precision, -t.delta[l].precision);
                prop_assert_eq!(s.delta[l].f1, -t.delta[l].f1);
            }
        }
    }
}
