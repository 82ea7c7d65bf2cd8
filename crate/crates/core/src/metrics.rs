//! Classification metrics: accuracy, positive predictivity (precision),
//! specificity, sensitivity (recall), F1, and the confusion matrix.
//!
//! Per-class values come from one-vs-rest TP/FP/TN/FN counts; the summary
//! metrics are macro-averages over classes. A class whose denominator is
//! zero contributes 0 to the average and is flagged, so degenerate folds
//! never crash evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction/truth length mismatch: {predictions} vs {truths}")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("label {label} is outside the {n_classes}-class range")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("no samples to evaluate")]
    Empty,
}

/// One-vs-rest counts and percentage metrics for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub pp: f64,
    pub sp: f64,
    pub se: f64,
    pub f1: f64,
}

/// Evaluation summary for one prediction run. All metric fields are
/// percentages in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub pp: f64,
    pub sp: f64,
    pub se: f64,
    pub f1: f64,
    /// `confusion[truth][prediction]` counts.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    /// Classes where some one-vs-rest denominator was zero.
    pub degenerate_classes: Vec<usize>,
}

fn percent(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Computes the confusion matrix and metric suite over parallel prediction
/// and truth label slices with `n_classes` classes.
pub fn compute_metrics(
    predictions: &[usize],
    truths: &[usize],
    n_classes: usize,
) -> Result<MetricsReport, MetricsError> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&label) = predictions.iter().chain(truths).find(|&&l| l >= n_classes) {
        return Err(MetricsError::LabelOutOfRange { label, n_classes });
    }

    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&pred, &truth) in predictions.iter().zip(truths) {
        confusion[truth][pred] += 1;
    }
    let total = predictions.len() as u64;
    let trace: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();

    let mut per_class = Vec::with_capacity(n_classes);
    let mut degenerate_classes = Vec::new();
    for (c, row) in confusion.iter().enumerate() {
        let tp = row[c];
        let fn_ = row.iter().sum::<u64>() - tp;
        let fp = confusion.iter().map(|r| r[c]).sum::<u64>() - tp;
        let tn = total - tp - fn_ - fp;
        let mut degenerate = false;
        let m = ClassMetrics {
            tp,
            fp,
            tn,
            fn_,
            pp: percent(tp, tp + fp, &mut degenerate),
            sp: percent(tn, tn + fp, &mut degenerate),
            se: percent(tp, tp + fn_, &mut degenerate),
            f1: percent(2 * tp, 2 * tp + fn_ + fp, &mut degenerate),
        };
        if degenerate {
            degenerate_classes.push(c);
        }
        per_class.push(m);
    }

    let k = n_classes as f64;
    Ok(MetricsReport {
        accuracy: 100.0 * trace as f64 / total as f64,
        pp: per_class.iter().map(|m| m.pp).sum::<f64>() / k,
        sp: per_class.iter().map(|m| m.sp).sum::<f64>() / k,
        se: per_class.iter().map(|m| m.se).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        confusion,
        per_class,
        degenerate_classes,
    })
}
