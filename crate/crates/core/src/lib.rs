//! Spiking rotating-neuron-reservoir (sRNR) building blocks for sEMG gesture
//! classification.
//!
//! The crate covers the full signal path from raw multichannel recordings to
//! classifier metrics:
//!
//! ```text
//! RawRecording
//!   -> normalization / trimming / windowing          (signal)
//!   -> Butterworth filterbank + full-wave rectifier  (filterbank)
//!   -> LIF spike encoding with rate-cap calibration  (encoding)
//!   -> parallel rotating LIF reservoirs              (reservoir)
//!   -> spike-count features + softmax / SVM readout  (readout)
//!   -> accuracy / PP / Sp / Se / F1 reports          (metrics)
//! ```
//!
//! Every stage is a pure function of its inputs and seeds, so whole runs are
//! reproducible bit for bit. The experiment driver and CLI live in the
//! `srnr-pipeline` crate.

pub mod encoding;
pub mod filterbank;
pub mod metrics;
pub mod raster;
pub mod readout;
pub mod reservoir;
pub mod signal;

pub use encoding::{
    calibrate_encoder, encode_channel, firing_rate, lif_step, Calibration, LifParams, LifState,
};
pub use filterbank::{
    design_butterworth_bandpass, expand_channels, full_wave_rectify, BandSpec, BiquadCascade,
};
pub use metrics::{compute_metrics, MetricsReport};
pub use raster::{RowMeaning, SpikeRaster};
pub use readout::{
    bin_spike_counts, delta_update, softmax, train_delta_softmax, train_linear_svm, FeatureVector,
    LinearSvmModel, SoftmaxModel,
};
pub use reservoir::{
    bank_step, effective_weight, init_mask, run_parallel_reservoirs, InputMask, ReservoirBankState,
    ReservoirConfig,
};
pub use signal::{
    min_max_normalize, segment_windows, split_train_test, trim_repetition, Fold, RawRecording,
    SplitMode, SplitSpec, Window,
};
