//! Pipeline configuration: every stage's knobs in one serializable struct,
//! loadable from TOML or JSON (the two forms are field-for-field
//! equivalent). Defaults are the standard experiment settings: 200 ms
//! windows, 600 ms trims, the 4-band 0/100/250/500/1000 Hz ladder, 300 Hz
//! encoder rate cap, 10-neuron banks, and a delta-rule readout at learning
//! rate 0.005 with batch size 1.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use srnr_core::encoding::LifParams;
use srnr_core::signal::SplitMode;

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PipelineConfig {
    /// Analysis window length in milliseconds.
    pub window_ms: f64,
    /// Transition-state trim at both ends of every repetition, ms.
    pub trim_ms: f64,
    /// Whether rest (label 0) windows participate as a class.
    pub include_rest: bool,
    /// Worker threads for data-parallel stages; 0 = all cores.
    pub workers: usize,
    pub bands: BandsConfig,
    pub encoder: EncoderConfig,
    pub reservoir: ReservoirConfigSection,
    pub readout: ReadoutConfig,
    pub split: SplitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_ms: 200.0,
            trim_ms: 600.0,
            include_rest: true,
            workers: 0,
            bands: BandsConfig::default(),
            encoder: EncoderConfig::default(),
            reservoir: ReservoirConfigSection::default(),
            readout: ReadoutConfig::default(),
            split: SplitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BandsConfig {
    /// Band edge ladder in Hz; band i spans (cutoffs[i], cutoffs[i+1]).
    pub cutoffs_hz: Vec<f64>,
    pub order: usize,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self {
            cutoffs_hz: srnr_core::filterbank::DEFAULT_CUTOFFS_HZ.to_vec(),
            order: srnr_core::filterbank::DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EncoderConfig {
    pub r: f64,
    pub c: f64,
    pub v_thr: f64,
    pub v_reset: f64,
    pub v_rest: f64,
    pub input_gain: f64,
    /// Per-channel firing-rate ceiling enforced by calibration.
    pub rate_cap_hz: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let p = LifParams::default();
        Self {
            r: p.r,
            c: p.c,
            v_thr: p.v_thr,
            v_reset: p.v_reset,
            v_rest: p.v_rest,
            input_gain: p.input_gain,
            rate_cap_hz: 300.0,
        }
    }
}

impl EncoderConfig {
    /// Encoder neuron params at one step per input sample.
    pub fn lif_params(&self, sample_rate_hz: f64) -> LifParams {
        LifParams {
            r: self.r,
            c: self.c,
            dt: 1.0 / sample_rate_hz,
            v_thr: self.v_thr,
            v_reset: self.v_reset,
            v_rest: self.v_rest,
            input_gain: self.input_gain,
        }
    }
}

/// How per-bank input masks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Every bank draws its own mask from a seed derived from the run seed.
    #[default]
    PerBank,
    /// All banks share the mask drawn for bank 0.
    Shared,
}

/// How the reservoir clock relates to the raster clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClockMode {
    /// One neuron step per raster step; tau = R*C is preserved.
    #[default]
    MatchRaster,
    /// OR-merge adjacent raster step pairs first, halving the clock (at
    /// 2 kHz this reproduces a literal 1 ms neuron step).
    DownsampleToNeuron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReservoirConfigSection {
    /// Neurons per bank (network size N).
    pub n_neurons: usize,
    /// Bernoulli density of the binary input masks.
    pub density: f64,
    /// Current injected per incoming spike on a connected neuron.
    pub spike_current: f64,
    pub seed: u64,
    pub mask_mode: MaskMode,
    pub clock_mode: ClockMode,
    pub neuron: NeuronConfig,
}

impl Default for ReservoirConfigSection {
    fn default() -> Self {
        Self {
            n_neurons: 10,
            density: 0.5,
            spike_current: 1.0,
            seed: 42,
            mask_mode: MaskMode::default(),
            clock_mode: ClockMode::default(),
            neuron: NeuronConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct NeuronConfig {
    pub r: f64,
    pub c: f64,
    pub v_thr: f64,
    pub v_reset: f64,
    pub v_rest: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        let p = LifParams::default();
        Self {
            r: p.r,
            c: p.c,
            v_thr: p.v_thr,
            v_reset: p.v_reset,
            v_rest: p.v_rest,
        }
    }
}

impl NeuronConfig {
    /// Reservoir neuron params stepped at the given raster clock.
    pub fn lif_params(&self, dt: f64) -> LifParams {
        LifParams {
            r: self.r,
            c: self.c,
            dt,
            v_thr: self.v_thr,
            v_reset: self.v_reset,
            v_rest: self.v_rest,
            input_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    #[default]
    DeltaSoftmax,
    LinearSvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReadoutConfig {
    pub classifier: Classifier,
    pub alpha: f64,
    pub batch: usize,
    pub epochs: usize,
    pub n_bins: usize,
    pub svm_reg_c: f64,
    pub svm_epochs: usize,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            classifier: Classifier::DeltaSoftmax,
            alpha: 0.005,
            batch: 1,
            epochs: 200,
            n_bins: 1,
            svm_reg_c: 1.0,
            svm_epochs: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            folds: 5,
            seed: 7,
            mode: SplitMode::DisjointFolds,
        }
    }
}

impl SplitConfig {
    pub fn split_spec(&self) -> srnr_core::signal::SplitSpec {
        srnr_core::signal::SplitSpec {
            train_fraction: self.train_fraction,
            n_folds: self.folds,
            rng_seed: self.seed,
            mode: self.mode,
        }
    }
}

impl PipelineConfig {
    /// Loads a config from a `.toml` or `.json` file, picked by extension.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
        let config: PipelineConfig = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.window_ms <= 0.0 {
            return bad(format!(
                "window-ms must be positive, got {}",
                self.window_ms
            ));
        }
        if self.trim_ms < 0.0 {
            return bad(format!("trim-ms must be nonnegative, got {}", self.trim_ms));
        }
        if self.bands.cutoffs_hz.len() < 2 || self.bands.cutoffs_hz.windows(2).any(|w| w[0] >= w[1])
        {
            return bad(format!(
                "band cutoffs must be a strictly ascending ladder, got {:?}",
                self.bands.cutoffs_hz
            ));
        }
        if self.bands.order < 2 || !self.bands.order.is_multiple_of(2) {
            return bad(format!(
                "band order must be even and >= 2, got {}",
                self.bands.order
            ));
        }
        if !self.encoder.rate_cap_hz.is_finite() || self.encoder.rate_cap_hz <= 0.0 {
            return bad(format!(
                "rate-cap-hz must be positive, got {}",
                self.encoder.rate_cap_hz
            ));
        }
        if self.reservoir.n_neurons == 0 {
            return bad("reservoir n-neurons must be >= 1".into());
        }
        if !(self.reservoir.density > 0.0 && self.reservoir.density <= 1.0) {
            return bad(format!(
                "mask density must be in (0,1], got {}",
                self.reservoir.density
            ));
        }
        if self.readout.n_bins == 0 {
            return bad("n-bins must be >= 1".into());
        }
        if self.readout.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!(
                "train-fraction must be in (0,1), got {}",
                self.split.train_fraction
            ));
        }
        if self.split.folds == 0 {
            return bad("folds must be >= 1".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; stamped into reports and saved
    /// models so a report pins the exact run configuration.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }

    /// Overrides all stage seeds from one master seed (split gets the seed
    /// itself, the reservoir a derived one).
    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.reservoir.seed = srnr_core::reservoir::derive_bank_seed(seed, usize::MAX);
        self
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
