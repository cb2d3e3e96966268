//! Confusion matrices, accuracy / precision / recall / F1, the
//! multi-to-binary merge, sequence-length sweeps, and prediction-time
//! benchmarking.

pub mod bench;
pub mod sweep;

pub use bench::{benchmark_prediction_time, linear_fit_r2, TimingRow};
pub use sweep::{sweep_sequence_length, SweepRow};

use rayon::prelude::*;

use crate::data::windows::WindowSet;
use crate::error::{Error, Result};
use crate::layers::model::{predict_probs, ModelParams, Task};

/// Counts of (true class, predicted class) pairs; rows are true classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) -> Result<()> {
        if true_class >= self.k || predicted >= self.k {
            return Err(Error::InvalidArgument(format!(
                "class id out of range: true {true_class}, pred {predicted}, k {}",
                self.k
            )));
        }
        self.counts[true_class * self.k + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        (0..self.k).map(|p| self.get(true_class, p)).sum()
    }

    /// Merge by elementwise addition (order-independent), for parallel
    /// evaluation shards.
    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.k != other.k {
            return Err(Error::InvalidArgument("cannot merge matrices of different k".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Metrics derived from a confusion matrix. Precision, recall, and F1 are
/// reported for binary (k = 2) matrices with class 1 (`attack`) positive;
/// multi-class reports carry per-class recall instead.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Set when a precision/recall/F1 denominator was zero and the metric
    /// was reported as 0.
    pub zero_denominator: bool,
    pub per_class_recall: Vec<f64>,
    /// Mean recall over classes that actually occur.
    pub macro_recall: f64,
    pub confusion: ConfusionMatrix,
    pub seconds_per_sequence: Option<f64>,
}

impl EvalReport {
    /// Render as aligned text lines, one metric per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy      {:.6}\n", self.accuracy));
        if let (Some(p), Some(r), Some(f1)) = (self.precision, self.recall, self.f1) {
            out.push_str(&format!("precision     {p:.6}\n"));
            out.push_str(&format!("recall        {r:.6}\n"));
            out.push_str(&format!("f1            {f1:.6}\n"));
        }
        if self.confusion.k() > 2 {
            out.push_str(&format!("macro_recall  {:.6}\n", self.macro_recall));
            for (c, r) in self.per_class_recall.iter().enumerate() {
                out.push_str(&format!("recall[{c}]     {r:.6}\n"));
            }
        }
        if self.zero_denominator {
            out.push_str("note: a zero denominator was reported as 0\n");
        }
        out.push_str("confusion rows=true cols=predicted\n");
        for t in 0..self.confusion.k() {
            let row: Vec<String> =
                (0..self.confusion.k()).map(|p| self.confusion.get(t, p).to_string()).collect();
            out.push_str(&format!("  {}\n", row.join(" ")));
        }
        out
    }
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per window target, dropout disabled. Windows are scored
/// independently (and in parallel); the output order matches the window set.
pub fn predict(params: &ModelParams, windows: &WindowSet) -> Result<Vec<usize>> {
    (0..windows.len())
        .into_par_iter()
        .map(|i| {
            let probs = predict_probs(params, &windows.window(i))?;
            Ok(argmax(&probs))
        })
        .collect()
}

/// True label per window target under the task's label view.
pub fn target_labels(windows: &WindowSet, task: Task) -> Vec<usize> {
    (0..windows.len())
        .map(|i| {
            let r = windows.window(i).target_record();
            match task {
                Task::Binary => r.binary_label as usize,
                Task::Multi | Task::M2b => r.multi_label as usize,
            }
        })
        .collect()
}

/// Tally (true, predicted) pairs into a k-class confusion matrix.
pub fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction/label length mismatch: {} vs {}",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&p, &t) in preds.iter().zip(labels) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// Accuracy = (TP+TN)/total, precision = TP/(TP+FP), recall = TP/(TP+FN),
/// F1 = 2PR/(P+R); multi-class accuracy is trace/total with per-class
/// recall. Zero denominators report the metric as 0 and set the flag.
pub fn metrics(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let accuracy = cm.trace() as f64 / total as f64;
    let mut zero_denominator = false;
    fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
        if den == 0 {
            *flag = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    let (precision, recall, f1) = if cm.k() == 2 {
        let tp = cm.get(1, 1);
        let fp = cm.get(0, 1);
        let fn_ = cm.get(1, 0);
        let p = ratio(tp, tp + fp, &mut zero_denominator);
        let r = ratio(tp, tp + fn_, &mut zero_denominator);
        let f1 = if p + r == 0.0 {
            zero_denominator = true;
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        (Some(p), Some(r), Some(f1))
    } else {
        (None, None, None)
    };

    let per_class_recall: Vec<f64> = (0..cm.k())
        .map(|c| ratio(cm.get(c, c), cm.row_sum(c), &mut zero_denominator))
        .collect();
    let present: Vec<f64> = (0..cm.k())
        .filter(|&c| cm.row_sum(c) > 0)
        .map(|c| per_class_recall[c])
        .collect();
    let macro_recall = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };

    Ok(EvalReport {
        accuracy,
        precision,
        recall,
        f1,
        zero_denominator,
        per_class_recall,
        macro_recall,
        confusion: cm.clone(),
        seconds_per_sequence: None,
    })
}

/// Collapse multi-class predictions and labels to binary: normal (0) stays
/// 0, every attack class maps to 1. Idempotent on already-binary inputs.
pub fn m2b_merge(multi_preds: &[usize], multi_labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let collapse = |xs: &[usize]| xs.iter().map(|&x| usize::from(x != 0)).collect();
    (collapse(multi_preds), collapse(multi_labels))
}

/// Predict a window set and compute the report for the task: binary metrics
/// for `Binary`, multi-class metrics for `Multi`, and binary metrics after
/// the merge for `M2b`.
pub fn evaluate_windows(params: &ModelParams, windows: &WindowSet) -> Result<EvalReport> {
    let task = params.config.task;
    let preds = predict(params, windows)?;
    let labels = target_labels(windows, task);
    let (preds, labels, k) = match task {
        Task::Binary => (preds, labels, 2),
        Task::Multi => (preds, labels, params.config.n_classes_data),
        Task::M2b => {
            let (p, l) = m2b_merge(&preds, &labels);
            (p, l, 2)
        }
    };
    metrics(&confusion(&preds, &labels, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = vec![0, 1, 2, 1, 0];
        let cm = confusion(&labels, &labels, 3).unwrap();
        assert_eq!(cm.trace(), 5);
        assert_eq!(cm.total(), 5);
        let report = metrics(&cm).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn hand_counted_binary_matrix() {
        let preds = [1, 0, 1, 1];
        let labels = [1, 1, 0, 1];
        let cm = confusion(&preds, &labels, 2).unwrap();
        assert_eq!(cm.get(1, 1), 2); // TP
        assert_eq!(cm.get(0, 0), 0); // TN
        assert_eq!(cm.get(0, 1), 1); // FP
        assert_eq!(cm.get(1, 0), 1); // FN
    }

    #[test]
    fn row_sums_equal_true_histogram() {
        let mut rng = StdRng::seed_from_u64(1);
        let labels: Vec<usize> = (0..300).map(|_| rng.gen_range(0..4)).collect();
        let preds: Vec<usize> = (0..300).map(|_| rng.gen_range(0..4)).collect();
        let cm = confusion(&preds, &labels, 4).unwrap();
        for c in 0..4 {
            let want = labels.iter().filter(|&&l| l == c).count() as u64;
            assert_eq!(cm.row_sum(c), want);
        }
    }

    #[test]
    fn hand_computed_metrics() {
        // TP=3, FP=1, FN=2, TN=4.
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..3 {
            cm.record(1, 1).unwrap();
        }
        cm.record(0, 1).unwrap();
        for _ in 0..2 {
            cm.record(1, 0).unwrap();
        }
        for _ in 0..4 {
            cm.record(0, 0).unwrap();
        }
        let r = metrics(&cm).unwrap();
        assert!((r.accuracy - 0.7).abs() < 1e-12);
        assert!((r.precision.unwrap() - 0.75).abs() < 1e-12);
        assert!((r.recall.unwrap() - 0.6).abs() < 1e-12);
        assert!((r.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(!r.zero_denominator);

        // F1 recomputed independently from the matrix.
        let p = 3.0 / 4.0;
        let rr = 3.0 / 5.0;
        assert!((r.f1.unwrap() - 2.0 * p * rr / (p + rr)).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_flagged() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 0).unwrap(); // no positives anywhere
        let r = metrics(&cm).unwrap();
        assert_eq!(r.precision, Some(0.0));
        assert!(r.zero_denominator);
        assert!(metrics(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn class_out_of_range_rejected() {
        assert!(confusion(&[2], &[0], 2).is_err());
        assert!(confusion(&[0], &[2], 2).is_err());
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = StdRng::seed_from_u64(2);
        let labels: Vec<usize> = (0..100).map(|_| rng.gen_range(0..2)).collect();
        let preds: Vec<usize> = (0..100).map(|_| rng.gen_range(0..2)).collect();
        let base = metrics(&confusion(&preds, &labels, 2).unwrap()).unwrap();

        let mut perm: Vec<usize> = (0..100).collect();
        for i in (1..100).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let preds_p: Vec<usize> = perm.iter().map(|&i| preds[i]).collect();
        let labels_p: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let permuted = metrics(&confusion(&preds_p, &labels_p, 2).unwrap()).unwrap();
        assert_eq!(base.accuracy, permuted.accuracy);
        assert_eq!(base.f1, permuted.f1);
        assert_eq!(base.confusion, permuted.confusion);
    }

    #[test]
    fn binary_accuracy_equals_trace_over_total() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let labels: Vec<usize> = (0..50).map(|_| rng.gen_range(0..2)).collect();
            let preds: Vec<usize> = (0..50).map(|_| rng.gen_range(0..2)).collect();
            let cm = confusion(&preds, &labels, 2).unwrap();
            let r = metrics(&cm).unwrap();
            let tp = cm.get(1, 1) as f64;
            let tn = cm.get(0, 0) as f64;
            assert_eq!(r.accuracy, (tp + tn) / cm.total() as f64);
        }
    }

    #[test]
    fn m2b_merge_rule_and_idempotence() {
        let (p, l) = m2b_merge(&[0, 3, 7, 0], &[0, 0, 5, 9]);
        assert_eq!(p, vec![0, 1, 1, 0]);
        assert_eq!(l, vec![0, 0, 1, 1]);
        let (p2, l2) = m2b_merge(&p, &l);
        assert_eq!(p, p2);
        assert_eq!(l, l2);
    }

    #[test]
    fn merging_commutes_with_metrics() {
        let mut rng = StdRng::seed_from_u64(4);
        let preds: Vec<usize> = (0..500).map(|_| rng.gen_range(0..10)).collect();
        let labels: Vec<usize> = (0..500).map(|_| rng.gen_range(0..10)).collect();
        let (bp, bl) = m2b_merge(&preds, &labels);
        let merged = metrics(&confusion(&bp, &bl, 2).unwrap()).unwrap();

        // Pre-merge by hand and compare.
        let hp: Vec<usize> = preds.iter().map(|&x| usize::from(x > 0)).collect();
        let hl: Vec<usize> = labels.iter().map(|&x| usize::from(x > 0)).collect();
        let hand = metrics(&confusion(&hp, &hl, 2).unwrap()).unwrap();
        assert_eq!(merged.accuracy, hand.accuracy);
        assert_eq!(merged.f1, hand.f1);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.0, 0.2, 0.8]), 2);
    }
}
