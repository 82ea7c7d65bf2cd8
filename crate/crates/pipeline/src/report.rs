//! Run reports: per-fold metrics, per-subject aggregation, overall summary,
//! config snapshot, and stage timings. Reports serialize to JSON for
//! machines and render to Markdown for humans; confusion matrices export as
//! CSV for external plotting.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use srnr_core::metrics::MetricsReport;

use crate::config::PipelineConfig;
use crate::PipelineError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Wall-clock seconds spent in each sequential stage. Stages are barriers,
/// so their sum accounts for the total up to orchestration overhead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StageTimings {
    pub preprocess_s: f64,
    pub filterbank_s: f64,
    pub calibration_s: f64,
    pub encoding_s: f64,
    pub reservoir_s: f64,
    pub features_s: f64,
    pub training_s: f64,
    pub evaluation_s: f64,
    pub reporting_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.preprocess_s
            + self.filterbank_s
            + self.calibration_s
            + self.encoding_s
            + self.reservoir_s
            + self.features_s
            + self.training_s
            + self.evaluation_s
            + self.reporting_s
    }
}

/// Encoder calibration outcome for one fold, with the SHA-256 digest of the
/// exact corpus the calibration consumed (the leakage audit recomputes this
/// from the training windows alone and compares).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CalibrationSummary {
    pub input_gain: f64,
    pub max_rate_hz: f64,
    pub iterations: usize,
    pub all_zero_corpus: bool,
    pub corpus_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FoldReport {
    pub fold: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    pub train_sha256: String,
    pub test_sha256: String,
    pub calibration: CalibrationSummary,
    /// Mean firing rate of reservoir output neurons over all windows, Hz.
    pub mean_reservoir_rate_hz: f64,
    pub metrics: MetricsReport,
    /// Per-epoch mean CE loss (delta-rule readout only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SubjectReport {
    pub subject_id: u32,
    /// Class index -> gesture label mapping used for this subject.
    pub labels: Vec<u16>,
    pub n_windows: usize,
    /// Label runs skipped because they were too short to trim.
    pub skipped_short_segments: usize,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    /// Present only when computed over >= 2 folds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Summary {
    pub mean_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_accuracy: Option<f64>,
    pub mean_pp: f64,
    pub mean_sp: f64,
    pub mean_se: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunReport {
    pub schema_version: u32,
    pub version: String,
    pub config: PipelineConfig,
    pub config_sha256: String,
    pub subjects: Vec<SubjectReport>,
    pub overall: Summary,
    pub timings: StageTimings,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

impl RunReport {
    /// Copy with timings zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> RunReport {
        let mut copy = self.clone();
        copy.timings = StageTimings::default();
        copy
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| PipelineError::Runtime(format!("cannot write {}: {e}", path.display())))
    }

    /// Human-readable summary.
    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Run report\n");
        let _ = writeln!(
            md,
            "- version: {} (schema {})",
            self.version, self.schema_version
        );
        let _ = writeln!(md, "- config sha256: `{}`", self.config_sha256);
        let _ = writeln!(
            md,
            "- classifier: {:?}, reservoir size {}, {} folds",
            self.config.readout.classifier,
            self.config.reservoir.n_neurons,
            self.config.split.folds
        );
        match self.overall.std_accuracy {
            Some(std) => {
                let _ = writeln!(
                    md,
                    "- overall accuracy: {:.1}% ± {:.1}%",
                    self.overall.mean_accuracy, std
                );
            }
            None => {
                let _ = writeln!(md, "- overall accuracy: {:.1}%", self.overall.mean_accuracy);
            }
        }
        let _ = writeln!(
            md,
            "- overall PP {:.1} / Sp {:.1} / Se {:.1} / F1 {:.1}\n",
            self.overall.mean_pp, self.overall.mean_sp, self.overall.mean_se, self.overall.mean_f1
        );
        let _ = writeln!(
            md,
            "| Subject | Acc (%) | PP (%) | Sp (%) | Se (%) | F1 (%) |"
        );
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for s in &self.subjects {
            let folds = s.folds.len() as f64;
            let avg = |f: fn(&MetricsReport) -> f64| {
                s.folds.iter().map(|fr| f(&fr.metrics)).sum::<f64>() / folds
            };
            let _ = writeln!(
                md,
                "| {} | {:.1} | {:.1} | {:.1} | {:.1} | {:.1} |",
                s.subject_id,
                s.mean_accuracy,
                avg(|m| m.pp),
                avg(|m| m.sp),
                avg(|m| m.se),
                avg(|m| m.f1),
            );
        }
        let t = &self.timings;
        let _ = writeln!(
            md,
            "\nTimings (s): preprocess {:.2}, filterbank {:.2}, calibration {:.2}, encoding {:.2}, reservoir {:.2}, features {:.2}, training {:.2}, evaluation {:.2}, reporting {:.2}; total {:.2}",
            t.preprocess_s,
            t.filterbank_s,
            t.calibration_s,
            t.encoding_s,
            t.reservoir_s,
            t.features_s,
            t.training_s,
            t.evaluation_s,
            t.reporting_s,
            t.total_s
        );
        md
    }

    /// Sums the per-subject confusion matrices of every fold (all subjects
    /// must share a label set for the sum to be meaningful; matrices of
    /// different sizes are summed over their common top-left block).
    pub fn pooled_confusion(&self) -> Vec<Vec<u64>> {
        let k = self
            .subjects
            .iter()
            .flat_map(|s| s.folds.iter().map(|f| f.metrics.confusion.len()))
            .max()
            .unwrap_or(0);
        let mut pooled = vec![vec![0u64; k]; k];
        for s in &self.subjects {
            for f in &s.folds {
                for (i, row) in f.metrics.confusion.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        pooled[i][j] += v;
                    }
                }
            }
        }
        pooled
    }

    /// Writes the pooled confusion matrix as CSV (row = truth, col = prediction).
    pub fn save_confusion_csv(&self, path: &Path) -> Result<(), PipelineError> {
        let pooled = self.pooled_confusion();
        let mut out = String::new();
        for row in &pooled {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        std::fs::write(path, out)
            .map_err(|e| PipelineError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
