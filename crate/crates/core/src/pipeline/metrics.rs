use serde::{Deserialize, Serialize};

use crate::ingest::BeatLabel;

/// Classification quality with Abnormal as the positive class. Every ratio
/// with a zero denominator is reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub specificity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let precision = ratio(tpf, tpf + fpf);
        let recall = ratio(tpf, tpf + fnf);
        Metrics {
            accuracy: ratio(tpf + tnf, tpf + fpf + tnf + fnf),
            specificity: ratio(tnf, tnf + fpf),
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            tp,
            fp,
            tn,
            fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn evaluate(pred: &[BeatLabel], truth: &[BeatLabel]) -> Metrics {
    assert_eq!(pred.len(), truth.len(), "prediction and label counts differ");
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        match (p.is_abnormal(), t.is_abnormal()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Metrics::from_counts(tp, fp, tn, fn_)
}

/// Unweighted mean of each ratio; confusion counts are summed.
pub fn macro_average(items: &[Metrics]) -> Metrics {
    if items.is_empty() {
        return Metrics::default();
    }
    let n = items.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
    Metrics {
        accuracy: mean(|m| m.accuracy),
        specificity: mean(|m| m.specificity),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        tp: items.iter().map(|m| m.tp).sum(),
        fp: items.iter().map(|m| m.fp).sum(),
        tn: items.iter().map(|m| m.tn).sum(),
        fn_: items.iter().map(|m| m.fn_).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BeatLabel::{Abnormal as A, Normal as N};

    #[test]
    fn perfect() {
        let m = evaluate(&[A, N, A], &[A, N, A]);
        assert_eq!((m.accuracy, m.specificity, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn nothing_flagged() {
        let m = evaluate(&[N, N], &[A, N]);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.total(), 2);
    }

    #[test]
    fn macro_of_identical() {
        let m = Metrics::from_counts(3, 1, 5, 2);
        let avg = macro_average(&[m, m, m]);
        assert!((avg.f1 - m.f1).abs() < 1e-15);
        assert_eq!(avg.tp, 9);
    }
}
