//! Leaky integrate-and-fire spike encoding of rectified band signals.
//!
//! Each rectified channel drives one LIF neuron; the membrane integrates the
//! injected current with an explicit-Euler step, fires when it reaches the
//! threshold, and hard-resets. A shared input gain is calibrated by
//! bisection so that no channel in the training corpus fires above the rate
//! cap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{RowMeaning, SpikeRaster};

/// Bisection stops once the achieved max rate is within this many Hz of the
/// cap, or after [`CALIBRATION_MAX_ITERS`] rate evaluations.
pub const CALIBRATION_RATE_TOL_HZ: f64 = 5.0;
pub const CALIBRATION_MAX_ITERS: usize = 40;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("invalid LIF parameters: {0}")]
    InvalidParams(String),
    #[error("sample {index} is negative ({value}); encoder input must be rectified")]
    NegativeSample { index: usize, value: f64 },
    #[error("spike train is empty")]
    EmptyTrain,
    #[error("calibration corpus is empty")]
    EmptyCorpus,
    #[error("rate cap must be positive, got {0}")]
    InvalidRateCap(f64),
}

// ---------------------------------------------------------------------------
// Neuron model
// ---------------------------------------------------------------------------

/// LIF neuron constants. The membrane time constant is `tau = r * c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Membrane resistance (volts per unit current).
    pub r: f64,
    /// Membrane capacitance.
    pub c: f64,
    /// Simulation step in seconds.
    pub dt: f64,
    /// Firing threshold in volts.
    pub v_thr: f64,
    /// Potential after a spike.
    pub v_reset: f64,
    /// Baseline potential the membrane leaks toward.
    pub v_rest: f64,
    /// Multiplier on injected current; the calibration handle.
    pub input_gain: f64,
}

impl Default for LifParams {
    /// Standard neuron constants: R = 5, C = 3e-3 (tau = 15 ms), dt = 1 ms,
    /// threshold 0.5 V, rest and reset at 0, unit gain.
    fn default() -> Self {
        Self {
            r: 5.0,
            c: 3e-3,
            dt: 1e-3,
            v_thr: 0.5,
            v_reset: 0.0,
            v_rest: 0.0,
            input_gain: 1.0,
        }
    }
}

impl LifParams {
    pub fn tau(&self) -> f64 {
        self.r * self.c
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_gain(mut self, input_gain: f64) -> Self {
        self.input_gain = input_gain;
        self
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        let fields = [
            self.r,
            self.c,
            self.dt,
            self.v_thr,
            self.v_reset,
            self.v_rest,
            self.input_gain,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(EncodingError::InvalidParams(format!(
                "parameters must be finite: {self:?}"
            )));
        }
        if self.r <= 0.0 || self.c <= 0.0 {
            return Err(EncodingError::InvalidParams(format!(
                "r and c must be positive, got r={}, c={}",
                self.r, self.c
            )));
        }
        if self.dt <= 0.0 {
            return Err(EncodingError::InvalidParams(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.dt / self.tau() >= 1.0 {
            return Err(EncodingError::InvalidParams(format!(
                "dt/tau = {} >= 1 breaks explicit-Euler stability",
                self.dt / self.tau()
            )));
        }
        if self.v_thr <= self.v_reset {
            return Err(EncodingError::InvalidParams(format!(
                "threshold {} must exceed reset {}",
                self.v_thr, self.v_reset
            )));
        }
        if self.v_rest >= self.v_thr {
            return Err(EncodingError::InvalidParams(format!(
                "rest {} must stay below threshold {}",
                self.v_rest, self.v_thr
            )));
        }
        if self.input_gain < 0.0 {
            return Err(EncodingError::InvalidParams(format!(
                "input gain must be nonnegative, got {}",
                self.input_gain
            )));
        }
        Ok(())
    }
}

/// Evolving membrane potential of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub v: f64,
}

impl LifState {
    pub fn resting(params: &LifParams) -> Self {
        Self { v: params.v_rest }
    }
}

/// One explicit-Euler membrane update:
/// `v += dt * (-(v - v_rest)/tau + gain * i_in / c)`,
/// then fire-and-reset if `v >= v_thr`. Returns whether a spike was emitted.
#[inline]
pub fn lif_step(state: &mut LifState, i_in: f64, params: &LifParams) -> bool {
    let dv = (-(state.v - params.v_rest) / params.tau() + params.input_gain * i_in / params.c)
        * params.dt;
    state.v += dv;
    if state.v >= params.v_thr {
        state.v = params.v_reset;
        true
    } else {
        false
    }
}

// ---------------------------------------------------------------------------
// Channel encoding
// ---------------------------------------------------------------------------

/// Encodes one rectified signal into a 0/1 spike train, starting from the
/// resting potential. Rejects negative samples: rectification is the
/// caller's contract.
pub fn encode_channel(signal: &[f64], params: &LifParams) -> Result<Vec<u8>, EncodingError> {
    params.validate()?;
    if let Some(index) = signal.iter().position(|&x| x < 0.0) {
        return Err(EncodingError::NegativeSample {
            index,
            value: signal[index],
        });
    }
    let mut state = LifState::resting(params);
    Ok(signal
        .iter()
        .map(|&x| u8::from(lif_step(&mut state, x, params)))
        .collect())
}

/// Encodes a stack of rectified channels into a spike raster (one row per
/// channel).
pub fn encode_channels(
    channels: &[Vec<f64>],
    params: &LifParams,
) -> Result<SpikeRaster, EncodingError> {
    let rows = channels
        .iter()
        .map(|ch| encode_channel(ch, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(
        SpikeRaster::from_rows(&rows, params.dt, RowMeaning::EncoderChannel)
            .expect("encoded rows are binary"),
    )
}

/// Mean firing rate of a spike train in Hz: `count / (len * dt)`.
pub fn firing_rate(train: &[u8], dt: f64) -> Result<f64, EncodingError> {
    if train.is_empty() {
        return Err(EncodingError::EmptyTrain);
    }
    let count = train.iter().filter(|&&s| s != 0).count();
    Ok(count as f64 / (train.len() as f64 * dt))
}

// ---------------------------------------------------------------------------
// Rate-cap calibration
// ---------------------------------------------------------------------------

/// Outcome of [`calibrate_encoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Input params with `input_gain` adjusted.
    pub params: LifParams,
    /// Max per-channel rate over the corpus at the calibrated gain.
    pub max_rate_hz: f64,
    /// Set when the corpus carries no signal; the gain is then returned
    /// unchanged.
    pub all_zero_corpus: bool,
    /// Rate evaluations spent.
    pub iterations: usize,
}

/// Adjusts the shared input gain by bisection so the maximum firing rate of
/// any corpus signal is at most `rate_cap_hz`, and as close to it as the
/// tolerance allows, so the encoder keeps as much drive as the cap permits.
///
/// Each corpus entry is treated as one channel signal (one window of one
/// channel); the bound therefore holds per window per channel. Corpus
/// entries are evaluated in parallel; the result is deterministic.
pub fn calibrate_encoder<S: AsRef<[f64]> + Sync>(
    corpus: &[S],
    params: &LifParams,
    rate_cap_hz: f64,
) -> Result<Calibration, EncodingError> {
    params.validate()?;
    if corpus.is_empty() || corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(EncodingError::EmptyCorpus);
    }
    if !rate_cap_hz.is_finite() || rate_cap_hz <= 0.0 {
        return Err(EncodingError::InvalidRateCap(rate_cap_hz));
    }
    if corpus.iter().flat_map(|s| s.as_ref()).all(|&x| x == 0.0) {
        return Ok(Calibration {
            params: *params,
            max_rate_hz: 0.0,
            all_zero_corpus: true,
            iterations: 0,
        });
    }

    let max_rate_at = |gain: f64| -> Result<f64, EncodingError> {
        let p = params.with_gain(gain);
        corpus
            .par_iter()
            .filter(|s| !s.as_ref().is_empty())
            .map(|signal| {
                let train = encode_channel(signal.as_ref(), &p)?;
                firing_rate(&train, p.dt)
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    };

    let start_gain = if params.input_gain > 0.0 {
        params.input_gain
    } else {
        1.0
    };
    let mut iterations = 1;
    let r0 = max_rate_at(start_gain)?;

    // Bracket the cap: spike counts are monotone in gain for rectified
    // inputs, so grow until the cap is exceeded (or give up: the corpus may
    // be unable to reach it) and keep the best under-cap gain seen.
    let (mut lo, mut lo_rate, mut hi) = if r0 <= rate_cap_hz {
        let mut lo = start_gain;
        let mut lo_rate = r0;
        let mut hi = start_gain;
        loop {
            if rate_cap_hz - lo_rate <= CALIBRATION_RATE_TOL_HZ
                || iterations >= CALIBRATION_MAX_ITERS
            {
                return Ok(Calibration {
                    params: params.with_gain(lo),
                    max_rate_hz: lo_rate,
                    all_zero_corpus: false,
                    iterations,
                });
            }
            hi *= 2.0;
            iterations += 1;
            let r = max_rate_at(hi)?;
            if r > rate_cap_hz {
                break (lo, lo_rate, hi);
            }
            lo = hi;
            lo_rate = r;
        }
    } else {
        // Zero gain never fires (the membrane stays at rest below threshold).
        (0.0, 0.0, start_gain)
    };

    while iterations < CALIBRATION_MAX_ITERS && rate_cap_hz - lo_rate > CALIBRATION_RATE_TOL_HZ {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        let r = max_rate_at(mid)?;
        if r <= rate_cap_hz {
            lo = mid;
            lo_rate = r;
        } else {
            hi = mid;
        }
    }

    Ok(Calibration {
        params: params.with_gain(lo),
        max_rate_hz: lo_rate,
        all_zero_corpus: false,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params() -> LifParams {
        LifParams::default()
    }

    // -- lif_step -------------------------------------------------------------

    #[test]
    fn rest_is_a_fixed_point() {
        let p = table_params();
        let mut state = LifState::resting(&p);
        for _ in 0..1000 {
            assert!(!lif_step(&mut state, 0.0, &p));
            assert_eq!(state.v, 0.0);
        }
    }

    #[test]
    fn subthreshold_drive_never_spikes() {
        // Steady state V = I*R = 0.25 < 0.5 threshold.
        let p = table_params();
        let i_in = 0.25 / p.r;
        let mut state = LifState::resting(&p);
        for _ in 0..100_000 {
            assert!(!lif_step(&mut state, i_in, &p));
        }
        assert!((state.v - 0.25).abs() < 1e-9);
    }

    #[test]
    fn first_spike_matches_charging_curve() {
        // Closed-form charging: V(t) = IR(1 - exp(-t/tau)); with IR = 1.0
        // and threshold 0.5 the crossing is at t = tau*ln(2) ~ 10.4 ms.
        let p = table_params();
        let i_in = 1.0 / p.r;
        let analytic_steps = (p.tau() * 2.0f64.ln() / p.dt).ceil() as i64;
        let mut state = LifState::resting(&p);
        let mut first_spike = None;
        for step in 1..=1000i64 {
            if lif_step(&mut state, i_in, &p) {
                first_spike = Some(step);
                break;
            }
        }
        let got = first_spike.expect("suprathreshold drive must spike");
        assert!(
            (got - analytic_steps).abs() <= 1,
            "first spike at step {got}, analytic {analytic_steps}"
        );
    }

    #[test]
    fn reset_applies_immediately_after_spike() {
        let p = table_params();
        let i_in = 2.0 / p.r;
        let mut state = LifState::resting(&p);
        for _ in 0..200 {
            if lif_step(&mut state, i_in, &p) {
                assert_eq!(state.v, p.v_reset);
            } else {
                assert!(state.v < p.v_thr);
            }
        }
    }

    // -- encode_channel ---------------------------------------------------------

    #[test]
    fn zero_signal_encodes_to_silence() {
        let train = encode_channel(&[0.0; 500], &table_params()).unwrap();
        assert!(train.iter().all(|&s| s == 0));
    }

    #[test]
    fn spike_count_monotone_in_gain() {
        let p = table_params();
        let burst: Vec<f64> = (0..400)
            .map(|i| 0.05 + 0.15 * ((i as f64) / 40.0).sin().abs())
            .collect();
        let mut last = 0usize;
        for gain in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let train = encode_channel(&burst, &p.with_gain(gain)).unwrap();
            let count = train.iter().filter(|&&s| s == 1).count();
            assert!(count >= last, "gain {gain}: {count} < {last}");
            last = count;
        }
    }

    #[test]
    fn constant_drive_gives_periodic_train() {
        // After each reset the charge-up repeats, so the inter-spike
        // interval matches the analytic period tau*ln(IR/(IR - v_thr)).
        let p = table_params();
        let ir = 1.5;
        let train = encode_channel(&vec![ir / p.r; 400], &p).unwrap();
        let spikes: Vec<usize> = train
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == 1).then_some(i))
            .collect();
        assert!(spikes.len() >= 3);
        let analytic = (p.tau() * (ir / (ir - p.v_thr)).ln() / p.dt).ceil();
        for pair in spikes.windows(2) {
            let isi = (pair[1] - pair[0]) as f64;
            assert!(
                (isi - analytic).abs() <= 1.0,
                "ISI {isi} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn negative_sample_is_rejected() {
        let err = encode_channel(&[0.1, -0.2], &table_params()).unwrap_err();
        assert!(matches!(
            err,
            EncodingError::NegativeSample { index: 1, .. }
        ));
    }

    // -- firing_rate -------------------------------------------------------------

    #[test]
    fn firing_rate_definition() {
        let mut train = vec![0u8; 400];
        for i in 0..60 {
            train[i * 6] = 1;
        }
        assert!((firing_rate(&train, 0.0005).unwrap() - 300.0).abs() < 1e-9);
        assert_eq!(firing_rate(&[0; 100], 0.0005).unwrap(), 0.0);
        assert_eq!(firing_rate(&[1; 10], 0.0005).unwrap(), 2000.0);
        assert!(matches!(
            firing_rate(&[], 0.001),
            Err(EncodingError::EmptyTrain)
        ));
    }

    // -- calibration ---------------------------------------------------------------

    fn synthetic_corpus(scale: f64) -> Vec<Vec<f64>> {
        (0..8)
            .map(|ch| {
                (0..400)
                    .map(|t| scale * (0.3 + 0.7 * ((t + ch * 13) as f64 / 23.0).sin().abs()))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn calibrated_rate_respects_cap_exactly() {
        let p = table_params().with_dt(0.0005);
        let cal = calibrate_encoder(&synthetic_corpus(1.0), &p, 300.0).unwrap();
        assert!(!cal.all_zero_corpus);
        assert!(cal.max_rate_hz <= 300.0);
        assert!(
            cal.max_rate_hz > 150.0,
            "rate {} should approach the cap",
            cal.max_rate_hz
        );
        // Re-encode at the calibrated gain and check per-window spike
        // bounds: 300 Hz over 400 steps of 0.5 ms allows at most 60 spikes.
        for signal in synthetic_corpus(1.0) {
            let train = encode_channel(&signal, &cal.params).unwrap();
            let count = train.iter().filter(|&&s| s == 1).count();
            assert!(count <= 60, "window spike count {count} > 60");
        }
    }

    #[test]
    fn under_cap_corpus_keeps_or_raises_gain() {
        let p = table_params().with_dt(0.0005);
        let weak = synthetic_corpus(1e-3);
        let cal = calibrate_encoder(&weak, &p, 300.0).unwrap();
        assert!(cal.params.input_gain >= p.input_gain);
        assert!(cal.max_rate_hz <= 300.0);
    }

    #[test]
    fn doubling_the_cap_never_lowers_the_gain() {
        let p = table_params().with_dt(0.0005);
        let corpus = synthetic_corpus(1.0);
        let g300 = calibrate_encoder(&corpus, &p, 300.0)
            .unwrap()
            .params
            .input_gain;
        let g600 = calibrate_encoder(&corpus, &p, 600.0)
            .unwrap()
            .params
            .input_gain;
        assert!(
            g600 >= g300,
            "gain at 600 Hz cap {g600} < gain at 300 Hz cap {g300}"
        );
    }

    #[test]
    fn all_zero_corpus_sets_warning_flag() {
        let p = table_params();
        let cal = calibrate_encoder(&[vec![0.0; 100], vec![0.0; 50]], &p, 300.0).unwrap();
        assert!(cal.all_zero_corpus);
        assert_eq!(cal.params, p);
        assert_eq!(cal.max_rate_hz, 0.0);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(
            calibrate_encoder::<Vec<f64>>(&[], &table_params(), 300.0),
            Err(EncodingError::EmptyCorpus)
        ));
    }

    #[test]
    fn determinism_same_inputs_same_result() {
        let p = table_params().with_dt(0.0005);
        let corpus = synthetic_corpus(0.7);
        let a = calibrate_encoder(&corpus, &p, 300.0).unwrap();
        let b = calibrate_encoder(&corpus, &p, 300.0).unwrap();
        assert_eq!(a, b);
    }
}
