//! End-to-end experiment execution.
//!
//! A run processes subjects one at a time (bounding memory to one subject's
//! band signals) and walks each through the stage sequence
//! normalize -> trim -> window -> filterbank -> calibrate -> encode ->
//! reservoir -> features -> train -> evaluate, per fold. Encoder calibration
//! and classifier training see training-fold windows only; every fold report
//! carries SHA-256 digests of what each side consumed so the isolation is
//! auditable. Stages run behind barriers, so their wall times account for
//! the total.

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::time::Instant;

use srnr_core::encoding::{calibrate_encoder, encode_channels, Calibration, LifParams};
use srnr_core::filterbank::{
    bands_from_cutoffs, design_butterworth_bandpass, expand_channels_with, BiquadCascade,
};
use srnr_core::metrics::compute_metrics;
use srnr_core::raster::SpikeRaster;
use srnr_core::readout::{
    bin_spike_counts, train_delta_softmax, train_linear_svm, DeltaTrainConfig, FeatureVector,
    LinearSvmModel, SoftmaxModel, SvmTrainConfig,
};
use srnr_core::reservoir::{derive_bank_seed, init_mask, run_parallel_reservoirs, ReservoirConfig};
use srnr_core::signal::{
    balance_classes, candidate_windows, normalize_recording, split_train_test, trim_repetition,
    Fold, RawRecording, SignalError, Window,
};

use crate::config::{hex_string, Classifier, ClockMode, MaskMode, PipelineConfig};
use crate::report::{
    mean_std, CalibrationSummary, FoldReport, RunReport, StageTimings, SubjectReport, Summary,
    REPORT_SCHEMA_VERSION,
};
use crate::PipelineError;

// ---------------------------------------------------------------------------
// Subject preparation
// ---------------------------------------------------------------------------

/// A subject after preprocessing and filterbank expansion: balanced labeled
/// windows, the class-index mapping, and the rectified band signals feeding
/// the encoder.
pub struct PreparedSubject {
    pub subject_id: u32,
    pub windows: Vec<Window>,
    /// Class index -> gesture label (sorted ascending).
    pub labels: Vec<u16>,
    /// Per-window class index.
    pub class_of: Vec<usize>,
    /// `[window][band * channels + channel][sample]` rectified band signals.
    pub band_signals: Vec<Vec<Vec<f64>>>,
    pub skipped_short_segments: usize,
    /// Raster/encoder step duration (one step per input sample).
    pub dt: f64,
}

fn band_designs(
    config: &PipelineConfig,
    sample_rate_hz: f64,
) -> Result<Vec<BiquadCascade>, PipelineError> {
    let nyquist = sample_rate_hz / 2.0;
    if *config.bands.cutoffs_hz.last().unwrap() > nyquist {
        return Err(PipelineError::Config(format!(
            "top band cutoff {} Hz exceeds Nyquist {} Hz of the dataset",
            config.bands.cutoffs_hz.last().unwrap(),
            nyquist
        )));
    }
    bands_from_cutoffs(&config.bands.cutoffs_hz, config.bands.order, sample_rate_hz)
        .iter()
        .map(design_butterworth_bandpass)
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// Normalizes, trims, windows, balances, and band-expands one subject.
pub fn prepare_subject(
    config: &PipelineConfig,
    recording: &RawRecording,
) -> Result<PreparedSubject, PipelineError> {
    prepare_subject_timed(config, recording, &mut StageTimings::default())
}

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

/// SHA-256 over a sequence of f64 signals (little-endian bit patterns, in
/// order). Used for the calibration-corpus and window-set digests.
pub fn signal_digest<'a, I>(signals: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut hasher = Sha256::new();
    for signal in signals {
        for v in signal {
            hasher.update(v.to_le_bytes());
        }
    }
    hex_string(&hasher.finalize())
}

fn windows_digest(windows: &[Window], indices: &[usize]) -> String {
    signal_digest(
        indices
            .iter()
            .flat_map(|&i| windows[i].samples.iter().map(Vec::as_slice)),
    )
}

// ---------------------------------------------------------------------------
// Fold execution
// ---------------------------------------------------------------------------

struct FoldOutcome {
    report: FoldReport,
    model: TrainedModel,
}

/// A trained readout with its label mapping and the config hash it was
/// produced under; serializes to JSON.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainedModel {
    pub subject_id: u32,
    pub fold: usize,
    pub config_sha256: String,
    /// Class index -> gesture label.
    pub labels: Vec<u16>,
    pub softmax: Option<SoftmaxModel>,
    pub svm: Option<LinearSvmModel>,
}

impl TrainedModel {
    pub fn save_json(&self, path: &std::path::Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, json)
            .map_err(|e| PipelineError::Runtime(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Data(format!("bad model file {}: {e}", path.display())))
    }
}

fn reservoir_configs(
    config: &PipelineConfig,
    n_banks: usize,
    neuron: LifParams,
) -> Result<Vec<ReservoirConfig>, PipelineError> {
    let res = &config.reservoir;
    (0..n_banks)
        .map(|bank| {
            let seed = match res.mask_mode {
                MaskMode::PerBank => derive_bank_seed(res.seed, bank),
                MaskMode::Shared => derive_bank_seed(res.seed, 0),
            };
            Ok(ReservoirConfig {
                n_neurons: res.n_neurons,
                mask: init_mask(res.n_neurons, res.density, seed)?,
                neuron,
                spike_current: res.spike_current,
            })
        })
        .collect()
}

/// Encoder rasters for every window at the calibrated gain, downsampled if
/// the clock mode asks for it.
fn encode_windows(
    subject: &PreparedSubject,
    params: &LifParams,
    clock_mode: ClockMode,
) -> Result<Vec<SpikeRaster>, PipelineError> {
    let rasters: Result<Vec<SpikeRaster>, _> = subject
        .band_signals
        .par_iter()
        .map(|signals| {
            encode_channels(signals, params).map(|raster| match clock_mode {
                ClockMode::MatchRaster => raster,
                ClockMode::DownsampleToNeuron => raster.downsample_pairs(),
            })
        })
        .collect();
    rasters.map_err(Into::into)
}

fn run_fold(
    config: &PipelineConfig,
    subject: &PreparedSubject,
    fold_idx: usize,
    fold: &Fold,
    timings: &mut StageTimings,
) -> Result<FoldOutcome, PipelineError> {
    let encoder_params = config.encoder.lif_params(1.0 / subject.dt);

    // Calibration sees training windows only.
    let t = Instant::now();
    let corpus: Vec<&[f64]> = fold
        .train
        .iter()
        .flat_map(|&w| subject.band_signals[w].iter().map(Vec::as_slice))
        .collect();
    let corpus_sha256 = signal_digest(corpus.iter().copied());
    let calibration: Calibration =
        calibrate_encoder(&corpus, &encoder_params, config.encoder.rate_cap_hz)?;
    timings.calibration_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let encoder_rasters =
        encode_windows(subject, &calibration.params, config.reservoir.clock_mode)?;
    timings.encoding_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let raster_dt = encoder_rasters[0].dt();
    let neuron = config.reservoir.neuron.lif_params(raster_dt);
    let n_banks = subject.band_signals[0].len();
    let configs = reservoir_configs(config, n_banks, neuron)?;
    let reservoir_rasters: Result<Vec<SpikeRaster>, _> = encoder_rasters
        .par_iter()
        .map(|raster| run_parallel_reservoirs(raster, &configs))
        .collect();
    let reservoir_rasters = reservoir_rasters?;
    let total_spikes: u64 = reservoir_rasters.iter().map(SpikeRaster::total_count).sum();
    let total_neuron_seconds: f64 = reservoir_rasters
        .iter()
        .map(|r| r.rows() as f64 * r.steps() as f64 * r.dt())
        .sum();
    let mean_reservoir_rate_hz = total_spikes as f64 / total_neuron_seconds;
    timings.reservoir_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let features: Result<Vec<FeatureVector>, _> = reservoir_rasters
        .par_iter()
        .zip(&subject.class_of)
        .map(|(raster, &class)| {
            bin_spike_counts(raster, config.readout.n_bins).map(|mut fv| {
                fv.label = class;
                fv
            })
        })
        .collect();
    let features = features?;
    timings.features_s += t.elapsed().as_secs_f64();

    // Training sees training windows only.
    let t = Instant::now();
    let train_set: Vec<FeatureVector> = fold.train.iter().map(|&w| features[w].clone()).collect();
    let n_classes = subject.labels.len();
    let train_seed = derive_bank_seed(
        config
            .split
            .seed
            .wrapping_add((subject.subject_id as u64) << 20),
        fold_idx,
    );
    let (softmax, svm, loss_curve) = match config.readout.classifier {
        Classifier::DeltaSoftmax => {
            let (model, loss) = train_delta_softmax(
                &train_set,
                &DeltaTrainConfig {
                    n_classes,
                    epochs: config.readout.epochs,
                    alpha: config.readout.alpha,
                    batch: config.readout.batch,
                    seed: train_seed,
                },
            )?;
            (Some(model), None, Some(loss))
        }
        Classifier::LinearSvm => {
            let model = train_linear_svm(
                &train_set,
                &SvmTrainConfig {
                    n_classes,
                    reg_c: config.readout.svm_reg_c,
                    epochs: config.readout.svm_epochs,
                    seed: train_seed,
                },
            )?;
            (None, Some(model), None)
        }
    };
    timings.training_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let predict = |x: &[f64]| -> Result<usize, PipelineError> {
        match (&softmax, &svm) {
            (Some(m), _) => Ok(m.predict(x)?),
            (_, Some(m)) => Ok(m.predict(x)?),
            _ => unreachable!("one classifier is always trained"),
        }
    };
    let predictions: Result<Vec<usize>, PipelineError> = fold
        .test
        .iter()
        .map(|&w| predict(&features[w].to_f64()))
        .collect();
    let predictions = predictions?;
    let truths: Vec<usize> = fold.test.iter().map(|&w| subject.class_of[w]).collect();
    let metrics = compute_metrics(&predictions, &truths, n_classes)?;
    timings.evaluation_s += t.elapsed().as_secs_f64();

    let report = FoldReport {
        fold: fold_idx,
        train_windows: fold.train.len(),
        test_windows: fold.test.len(),
        train_sha256: windows_digest(&subject.windows, &fold.train),
        test_sha256: windows_digest(&subject.windows, &fold.test),
        calibration: CalibrationSummary {
            input_gain: calibration.params.input_gain,
            max_rate_hz: calibration.max_rate_hz,
            iterations: calibration.iterations,
            all_zero_corpus: calibration.all_zero_corpus,
            corpus_sha256,
        },
        mean_reservoir_rate_hz,
        metrics,
        loss_curve,
    };
    Ok(FoldOutcome {
        report,
        model: TrainedModel {
            subject_id: subject.subject_id,
            fold: fold_idx,
            config_sha256: config.sha256(),
            labels: subject.labels.clone(),
            softmax,
            svm,
        },
    })
}

// ---------------------------------------------------------------------------
// Whole runs
// ---------------------------------------------------------------------------

/// Everything a run produces: the report plus the trained per-fold models.
pub struct RunOutput {
    pub report: RunReport,
    pub models: Vec<TrainedModel>,
}

fn in_worker_pool<T: Send>(
    workers: usize,
    job: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    if workers == 0 {
        Ok(job())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::Runtime(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(job))
    }
}

/// Runs the full pipeline over every subject and fold. Deterministic given
/// the config and dataset: reports differ only in timings across repeat
/// runs.
pub fn run_pipeline(
    config: &PipelineConfig,
    subjects: &[RawRecording],
) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    if subjects.is_empty() {
        return Err(PipelineError::Data("no subjects to process".into()));
    }
    in_worker_pool(config.workers, || run_pipeline_inner(config, subjects))?
}

fn run_pipeline_inner(
    config: &PipelineConfig,
    subjects: &[RawRecording],
) -> Result<RunOutput, PipelineError> {
    let run_start = Instant::now();
    let mut timings = StageTimings::default();
    let mut subject_reports = Vec::with_capacity(subjects.len());
    let mut models = Vec::new();

    for recording in subjects {
        let prepared = prepare_subject_timed(config, recording, &mut timings)?;
        let folds = split_train_test(&prepared.windows, &config.split.split_spec())?;

        let mut fold_reports = Vec::with_capacity(folds.len());
        for (fold_idx, fold) in folds.iter().enumerate() {
            let outcome = run_fold(config, &prepared, fold_idx, fold, &mut timings)?;
            fold_reports.push(outcome.report);
            models.push(outcome.model);
        }

        let accuracies: Vec<f64> = fold_reports.iter().map(|f| f.metrics.accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
        subject_reports.push(SubjectReport {
            subject_id: prepared.subject_id,
            labels: prepared.labels.clone(),
            n_windows: prepared.windows.len(),
            skipped_short_segments: prepared.skipped_short_segments,
            folds: fold_reports,
            mean_accuracy,
            std_accuracy,
        });
    }

    let t = Instant::now();
    let all_folds: Vec<&FoldReport> = subject_reports
        .iter()
        .flat_map(|s| s.folds.iter())
        .collect();
    let accuracies: Vec<f64> = all_folds.iter().map(|f| f.metrics.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
    let mean_of = |f: fn(&FoldReport) -> f64| {
        all_folds.iter().map(|fr| f(fr)).sum::<f64>() / all_folds.len() as f64
    };
    let overall = Summary {
        mean_accuracy,
        std_accuracy,
        mean_pp: mean_of(|f| f.metrics.pp),
        mean_sp: mean_of(|f| f.metrics.sp),
        mean_se: mean_of(|f| f.metrics.se),
        mean_f1: mean_of(|f| f.metrics.f1),
    };
    timings.reporting_s += t.elapsed().as_secs_f64();
    timings.total_s = run_start.elapsed().as_secs_f64();

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_sha256: config.sha256(),
        subjects: subject_reports,
        overall,
        timings,
    };
    Ok(RunOutput { report, models })
}

/// prepare_subject with the preprocess and filterbank phases timed
/// separately.
fn prepare_subject_timed(
    config: &PipelineConfig,
    recording: &RawRecording,
    timings: &mut StageTimings,
) -> Result<PreparedSubject, PipelineError> {
    // Phase 1: normalize/trim/window/balance (cheap, sequential).
    let t = Instant::now();
    let designs = band_designs(config, recording.sample_rate)?;
    let normalized = normalize_recording(recording)?;
    let mut windows = Vec::new();
    let mut skipped = 0usize;
    for run in normalized.label_runs() {
        if run.label == 0 && !config.include_rest {
            continue;
        }
        let segment = normalized.slice(run.start, run.end);
        match trim_repetition(&segment, config.trim_ms) {
            Ok(trimmed) => windows.extend(candidate_windows(&trimmed, config.window_ms)?),
            Err(SignalError::SegmentTooShort { .. }) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let windows = balance_classes(windows);
    if windows.is_empty() {
        return Err(PipelineError::Data(format!(
            "subject {}: no usable windows after trimming and balancing",
            recording.subject_id
        )));
    }
    let mut labels: Vec<u16> = windows.iter().map(|w| w.label).collect();
    labels.sort_unstable();
    labels.dedup();
    let class_of: Vec<usize> = windows
        .iter()
        .map(|w| labels.binary_search(&w.label).expect("label present"))
        .collect();
    timings.preprocess_s += t.elapsed().as_secs_f64();

    // Phase 2: filterbank expansion (data-parallel over windows).
    let t = Instant::now();
    let band_signals: Vec<Vec<Vec<f64>>> = windows
        .par_iter()
        .map(|w| expand_channels_with(w, &designs))
        .collect();
    timings.filterbank_s += t.elapsed().as_secs_f64();

    Ok(PreparedSubject {
        subject_id: recording.subject_id,
        windows,
        labels,
        class_of,
        band_signals,
        skipped_short_segments: skipped,
        dt: 1.0 / recording.sample_rate,
    })
}

// ---------------------------------------------------------------------------
// Network-size sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV with the fixed columns `size,mean_acc,std_acc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,mean_acc,std_acc\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.4},{:.4}\n",
                row.size, row.mean_acc, row.std_acc
            ));
        }
        out
    }
}

/// Runs the pipeline once per reservoir size, sharing every other setting
/// and seed, and tabulates accuracy against size.
pub fn sweep_network_size(
    config: &PipelineConfig,
    sizes: &[usize],
    subjects: &[RawRecording],
) -> Result<SweepTable, PipelineError> {
    if sizes.is_empty() {
        return Err(PipelineError::Config(
            "sweep needs at least one size".into(),
        ));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut cfg = config.clone();
        cfg.reservoir.n_neurons = size;
        let output = run_pipeline(&cfg, subjects)?;
        rows.push(SweepRow {
            size,
            mean_acc: output.report.overall.mean_accuracy,
            std_acc: output.report.overall.std_accuracy.unwrap_or(0.0),
        });
    }
    Ok(SweepTable { rows })
}

// ---------------------------------------------------------------------------
// Feature export
// ---------------------------------------------------------------------------

/// Which layer's spike counts to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureStage {
    PreReservoir,
    PostReservoir,
}

/// A labeled feature matrix destined for external embedding/visualization
/// tools.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    /// (counts, gesture label) per window.
    pub rows: Vec<(Vec<u32>, u16)>,
}

impl FeatureTable {
    /// CSV with columns `f0..f{dim-1},label`.
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (0..self.dim)
            .map(|i| format!("f{i}"))
            .chain(["label".into()])
            .collect();
        let mut out = header.join(",") + "\n";
        for (counts, label) in &self.rows {
            let mut line: Vec<String> = counts.iter().map(u32::to_string).collect();
            line.push(label.to_string());
            out.push_str(&(line.join(",") + "\n"));
        }
        out
    }
}

/// Exports per-window spike-count features at the chosen stage. The encoder
/// is calibrated on the whole window set here; it is an analysis export,
/// not an evaluation path.
pub fn export_features(
    config: &PipelineConfig,
    stage: FeatureStage,
    subjects: &[RawRecording],
) -> Result<FeatureTable, PipelineError> {
    config.validate()?;
    if subjects.is_empty() {
        return Err(PipelineError::Data("no subjects to process".into()));
    }
    in_worker_pool(config.workers, || {
        export_features_inner(config, stage, subjects)
    })?
}

fn export_features_inner(
    config: &PipelineConfig,
    stage: FeatureStage,
    subjects: &[RawRecording],
) -> Result<FeatureTable, PipelineError> {
    let mut rows = Vec::new();
    let mut dim = 0usize;
    for recording in subjects {
        let prepared = prepare_subject(config, recording)?;
        let encoder_params = config.encoder.lif_params(1.0 / prepared.dt);
        let corpus: Vec<&[f64]> = prepared
            .band_signals
            .iter()
            .flat_map(|w| w.iter().map(Vec::as_slice))
            .collect();
        let calibration = calibrate_encoder(&corpus, &encoder_params, config.encoder.rate_cap_hz)?;
        let rasters = encode_windows(&prepared, &calibration.params, config.reservoir.clock_mode)?;

        let rasters = match stage {
            FeatureStage::PreReservoir => rasters,
            FeatureStage::PostReservoir => {
                let neuron = config.reservoir.neuron.lif_params(rasters[0].dt());
                let configs = reservoir_configs(config, prepared.band_signals[0].len(), neuron)?;
                let projected: Result<Vec<SpikeRaster>, _> = rasters
                    .par_iter()
                    .map(|raster| run_parallel_reservoirs(raster, &configs))
                    .collect();
                projected?
            }
        };

        for (raster, window) in rasters.iter().zip(&prepared.windows) {
            let fv = bin_spike_counts(raster, config.readout.n_bins)?;
            dim = fv.counts.len();
            rows.push((fv.counts, window.label));
        }
    }
    Ok(FeatureTable { dim, rows })
}

/// Calibrates the encoder per subject over all windows and reports the
/// outcome (the `calibrate` CLI subcommand).
pub fn calibrate_subjects(
    config: &PipelineConfig,
    subjects: &[RawRecording],
) -> Result<Vec<(u32, Calibration)>, PipelineError> {
    config.validate()?;
    in_worker_pool(config.workers, || {
        subjects
            .iter()
            .map(|recording| {
                let prepared = prepare_subject(config, recording)?;
                let encoder_params = config.encoder.lif_params(1.0 / prepared.dt);
                let corpus: Vec<&[f64]> = prepared
                    .band_signals
                    .iter()
                    .flat_map(|w| w.iter().map(Vec::as_slice))
                    .collect();
                let calibration =
                    calibrate_encoder(&corpus, &encoder_params, config.encoder.rate_cap_hz)?;
                Ok((prepared.subject_id, calibration))
            })
            .collect()
    })?
}
