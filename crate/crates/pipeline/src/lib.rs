//! Experiment driver for the sRNR gesture classification pipeline.
//!
//! Wires the `srnr-core` stages into reproducible end-to-end runs: dataset
//! ingestion from CSV manifests, synthetic dataset generation, per-subject
//! cross-validated training and evaluation, network-size sweeps, and
//! feature-matrix exports. The `srnr` binary is a thin CLI over this
//! library.

pub mod config;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod synth;

pub use config::{Classifier, PipelineConfig};
pub use manifest::{ingest_dataset, DatasetManifest, IngestedSubject, SubjectEntry};
pub use report::{FoldReport, RunReport, StageTimings, SubjectReport, Summary};
pub use runner::{export_features, run_pipeline, sweep_network_size, FeatureStage};
pub use synth::{synthesize_dataset, SynthSpec};

use thiserror::Error;

/// Pipeline failures, classified for CLI exit codes: configuration problems
/// exit 2, dataset problems exit 3, runtime failures exit 4.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Runtime(_) => 4,
        }
    }
}

impl From<srnr_core::signal::SignalError> for PipelineError {
    fn from(e: srnr_core::signal::SignalError) -> Self {
        PipelineError::Runtime(format!("signal stage: {e}"))
    }
}

impl From<srnr_core::filterbank::FilterError> for PipelineError {
    fn from(e: srnr_core::filterbank::FilterError) -> Self {
        PipelineError::Runtime(format!("filterbank stage: {e}"))
    }
}

impl From<srnr_core::encoding::EncodingError> for PipelineError {
    fn from(e: srnr_core::encoding::EncodingError) -> Self {
        PipelineError::Runtime(format!("encoding stage: {e}"))
    }
}

impl From<srnr_core::reservoir::ReservoirError> for PipelineError {
    fn from(e: srnr_core::reservoir::ReservoirError) -> Self {
        PipelineError::Runtime(format!("reservoir stage: {e}"))
    }
}

impl From<srnr_core::readout::ReadoutError> for PipelineError {
    fn from(e: srnr_core::readout::ReadoutError) -> Self {
        PipelineError::Runtime(format!("readout stage: {e}"))
    }
}

impl From<srnr_core::metrics::MetricsError> for PipelineError {
    fn from(e: srnr_core::metrics::MetricsError) -> Self {
        PipelineError::Runtime(format!("metrics stage: {e}"))
    }
}
