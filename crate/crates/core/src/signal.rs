//! Core time-series types and the preprocessing protocol: min-max
//! normalization, repetition trimming, fixed-length windowing with class
//! balancing, and stratified train/test splitting.
//!
//! Everything here is a pure function of its inputs plus an explicit RNG
//! seed; window lists are safe to process with data-parallel maps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("recording is invalid: {0}")]
    InvalidRecording(String),
    #[error("repetition {repetition_id} is too short to trim: {duration_ms:.1} ms <= 2 x {trim_ms:.1} ms")]
    SegmentTooShort {
        repetition_id: u16,
        duration_ms: f64,
        trim_ms: f64,
    },
    #[error(
        "window length {window_len_ms} ms is not a whole number of samples at {sample_rate} Hz"
    )]
    WindowNotIntegral {
        window_len_ms: f64,
        sample_rate: f64,
    },
    #[error("split spec is invalid: {0}")]
    InvalidSplit(String),
    #[error("classes with too few windows for {n_folds} folds: {classes:?}")]
    TooFewWindows { classes: Vec<u16>, n_folds: usize },
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A multichannel sampled signal with per-sample gesture and repetition
/// labels. Label value 0 means rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    /// Samples laid out `[channel][time]`; all channels have equal length.
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: f64,
    /// Per-sample gesture class id, length equal to the time axis.
    pub gesture_label: Vec<u16>,
    /// Per-sample repetition id, length equal to the time axis.
    pub repetition_id: Vec<u16>,
    pub subject_id: u32,
}

impl RawRecording {
    pub fn new(
        samples: Vec<Vec<f64>>,
        sample_rate: f64,
        gesture_label: Vec<u16>,
        repetition_id: Vec<u16>,
        subject_id: u32,
    ) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::InvalidRecording(
                "need at least one channel".into(),
            ));
        }
        if sample_rate <= 0.0 {
            return Err(SignalError::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let len = samples[0].len();
        if let Some(ch) = samples.iter().position(|c| c.len() != len) {
            return Err(SignalError::InvalidRecording(format!(
                "channel {ch} has {} samples, expected {len}",
                samples[ch].len()
            )));
        }
        if gesture_label.len() != len || repetition_id.len() != len {
            return Err(SignalError::InvalidRecording(format!(
                "label streams ({} / {}) do not match sample length {len}",
                gesture_label.len(),
                repetition_id.len()
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            gesture_label,
            repetition_id,
            subject_id,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.samples.len()
    }

    /// Number of samples on the time axis.
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_ms(&self) -> f64 {
        self.len() as f64 * 1000.0 / self.sample_rate
    }

    /// Copies out the half-open sample range `[start, end)` with its labels.
    pub fn slice(&self, start: usize, end: usize) -> RawRecording {
        RawRecording {
            samples: self
                .samples
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            sample_rate: self.sample_rate,
            gesture_label: self.gesture_label[start..end].to_vec(),
            repetition_id: self.repetition_id[start..end].to_vec(),
            subject_id: self.subject_id,
        }
    }

    /// Maximal runs of constant `(gesture_label, repetition_id)`, as
    /// half-open `[start, end)` sample ranges in temporal order.
    pub fn label_runs(&self) -> Vec<LabelRun> {
        let mut runs = Vec::new();
        let n = self.len();
        let mut start = 0;
        for t in 1..=n {
            let boundary = t == n
                || self.gesture_label[t] != self.gesture_label[start]
                || self.repetition_id[t] != self.repetition_id[start];
            if boundary {
                runs.push(LabelRun {
                    start,
                    end: t,
                    label: self.gesture_label[start],
                    repetition_id: self.repetition_id[start],
                });
                start = t;
            }
        }
        runs
    }
}

/// One maximal constant-label span of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRun {
    pub start: usize,
    pub end: usize,
    pub label: u16,
    pub repetition_id: u16,
}

/// A fixed-length labeled segment cut from a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Samples laid out `[channel][time]`.
    pub samples: Vec<Vec<f64>>,
    pub label: u16,
    pub subject_id: u32,
    pub window_len_ms: f64,
}

impl Window {
    pub fn num_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How cross-validation folds are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Disjoint stratified k-fold: each class is shuffled once and cut into
    /// `n_folds` balanced chunks; fold i tests on chunk i. With `n_folds = 1`
    /// this degenerates, so a single stratified split at `train_fraction`
    /// is used instead.
    #[default]
    DisjointFolds,
    /// Each fold is an independent stratified shuffle-split at
    /// `train_fraction`.
    IndependentShuffles,
}

/// Train/test split policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub n_folds: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SignalError::InvalidSplit(format!(
                "train_fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        if self.n_folds == 0 {
            return Err(SignalError::InvalidSplit("n_folds must be >= 1".into()));
        }
        Ok(())
    }
}

/// One fold's train/test partition, as indices into the window list passed
/// to [`split_train_test`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Scales a signal to [0, 1] by its own min and max. A constant signal maps
/// to all zeros (a flat channel carries no information, and zero is the
/// inactive LIF-input value).
pub fn min_max_normalize(signal: &[f64]) -> Result<Vec<f64>, SignalError> {
    if signal.is_empty() {
        return Err(SignalError::EmptySignal);
    }
    let min = signal.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.0; signal.len()]);
    }
    let span = max - min;
    Ok(signal.iter().map(|&x| (x - min) / span).collect())
}

/// Normalizes each channel of a recording over its full length.
///
/// Scope is deliberately per channel per recording, not per window:
/// per-window scaling would destroy the amplitude cues that distinguish
/// gestures.
pub fn normalize_recording(rec: &RawRecording) -> Result<RawRecording, SignalError> {
    let samples = rec
        .samples
        .iter()
        .map(|c| min_max_normalize(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RawRecording {
        samples,
        sample_rate: rec.sample_rate,
        gesture_label: rec.gesture_label.clone(),
        repetition_id: rec.repetition_id.clone(),
        subject_id: rec.subject_id,
    })
}

/// Drops `trim_ms` from both ends of a repetition segment, removing gesture
/// transition states. Labels are preserved.
pub fn trim_repetition(rep: &RawRecording, trim_ms: f64) -> Result<RawRecording, SignalError> {
    let trim_samples = (trim_ms * rep.sample_rate / 1000.0).round() as usize;
    let len = rep.len();
    if len <= 2 * trim_samples {
        return Err(SignalError::SegmentTooShort {
            repetition_id: rep.repetition_id.first().copied().unwrap_or(0),
            duration_ms: rep.duration_ms(),
            trim_ms,
        });
    }
    Ok(rep.slice(trim_samples, len - trim_samples))
}

/// Window length in samples, requiring `window_len_ms` to be a whole number
/// of samples at the recording's rate.
pub fn window_len_samples(window_len_ms: f64, sample_rate: f64) -> Result<usize, SignalError> {
    let exact = window_len_ms * sample_rate / 1000.0;
    if exact <= 0.0 || (exact - exact.round()).abs() > 1e-9 {
        return Err(SignalError::WindowNotIntegral {
            window_len_ms,
            sample_rate,
        });
    }
    Ok(exact.round() as usize)
}

/// Cuts a recording into consecutive non-overlapping windows, keeping only
/// single-label ones. Exactly `floor(S / L)` candidates are considered; a
/// window spanning a gesture boundary is discarded, not an error.
pub fn candidate_windows(
    rec: &RawRecording,
    window_len_ms: f64,
) -> Result<Vec<Window>, SignalError> {
    let len = window_len_samples(window_len_ms, rec.sample_rate)?;
    let mut windows = Vec::with_capacity(rec.len() / len);
    let mut start = 0;
    while start + len <= rec.len() {
        let end = start + len;
        let label = rec.gesture_label[start];
        if rec.gesture_label[start..end].iter().all(|&l| l == label) {
            windows.push(Window {
                samples: rec.samples.iter().map(|c| c[start..end].to_vec()).collect(),
                label,
                subject_id: rec.subject_id,
                window_len_ms,
            });
        }
        start = end;
    }
    Ok(windows)
}

/// Truncates every class to the minimum per-class window count, keeping
/// temporal order, so the resulting set has an equal distribution of
/// gestures.
pub fn balance_classes(windows: Vec<Window>) -> Vec<Window> {
    let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
    for w in &windows {
        *counts.entry(w.label).or_insert(0) += 1;
    }
    let Some(&min_count) = counts.values().min() else {
        return windows;
    };
    let mut kept: BTreeMap<u16, usize> = BTreeMap::new();
    windows
        .into_iter()
        .filter(|w| {
            let k = kept.entry(w.label).or_insert(0);
            *k += 1;
            *k <= min_count
        })
        .collect()
}

/// Windows a trimmed recording: non-overlapping consecutive windows, mixed
/// label windows dropped, classes balanced by truncation to the per-class
/// minimum.
pub fn segment_windows(rec: &RawRecording, window_len_ms: f64) -> Result<Vec<Window>, SignalError> {
    Ok(balance_classes(candidate_windows(rec, window_len_ms)?))
}

/// Stratified train/test folds over a window list. Deterministic given
/// `spec.rng_seed`; each fold's train and test sets are disjoint.
pub fn split_train_test(windows: &[Window], spec: &SplitSpec) -> Result<Vec<Fold>, SignalError> {
    spec.validate()?;

    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        by_class.entry(w.label).or_default().push(i);
    }

    // Every class must be able to put at least one window in train and one
    // in test in every fold.
    let min_needed = match spec.mode {
        SplitMode::DisjointFolds if spec.n_folds > 1 => spec.n_folds,
        _ => 2,
    };
    let starved: Vec<u16> = by_class
        .iter()
        .filter(|(_, idx)| idx.len() < min_needed)
        .map(|(&c, _)| c)
        .collect();
    if !starved.is_empty() {
        return Err(SignalError::TooFewWindows {
            classes: starved,
            n_folds: spec.n_folds,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut folds = vec![
        Fold {
            train: Vec::new(),
            test: Vec::new(),
        };
        spec.n_folds
    ];

    match spec.mode {
        SplitMode::DisjointFolds if spec.n_folds > 1 => {
            for indices in by_class.values() {
                let mut shuffled = indices.clone();
                shuffled.shuffle(&mut rng);
                // Balanced chunks: the first (len % k) chunks get one extra.
                let k = spec.n_folds;
                let base = shuffled.len() / k;
                let extra = shuffled.len() % k;
                let mut offset = 0;
                for (f, fold) in folds.iter_mut().enumerate() {
                    let size = base + usize::from(f < extra);
                    fold.test
                        .extend_from_slice(&shuffled[offset..offset + size]);
                    fold.train.extend_from_slice(&shuffled[..offset]);
                    fold.train.extend_from_slice(&shuffled[offset + size..]);
                    offset += size;
                }
            }
        }
        _ => {
            // Independent stratified shuffle-split per fold; test size is
            // round((1 - train_fraction) * N) per class, clamped so both
            // sides are non-empty.
            for fold in folds.iter_mut() {
                for indices in by_class.values() {
                    let mut shuffled = indices.clone();
                    shuffled.shuffle(&mut rng);
                    let n = shuffled.len();
                    let test_size =
                        (((1.0 - spec.train_fraction) * n as f64).round() as usize).clamp(1, n - 1);
                    fold.test.extend_from_slice(&shuffled[..test_size]);
                    fold.train.extend_from_slice(&shuffled[test_size..]);
                }
            }
        }
    }

    for fold in &mut folds {
        fold.train.sort_unstable();
        fold.test.sort_unstable();
    }
    Ok(folds)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
