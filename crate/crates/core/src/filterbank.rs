//! Butterworth bandpass filterbank and full-wave rectifier.
//!
//! Each band is a 4th-order Butterworth filter designed in the analog domain
//! (zero/pole/gain form), discretized by the bilinear transform with edge
//! prewarping, and realized as cascaded biquad sections in transposed direct
//! form II. A band starting at DC is designed as a pure lowpass and a band
//! ending at Nyquist as a pure highpass, since those bandpass edges are
//! degenerate after the bilinear transform.
//!
//! Filters are applied causally; state is reset per window so windows stay
//! independent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::signal::Window;

/// Band edges in Hz for the standard 4-band split of a 2 kHz sEMG signal:
/// band i spans `[DEFAULT_CUTOFFS_HZ[i], DEFAULT_CUTOFFS_HZ[i+1])`.
pub const DEFAULT_CUTOFFS_HZ: [f64; 5] = [0.0, 100.0, 250.0, 500.0, 1000.0];

/// Default filter order per band.
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid band spec: {0}")]
    InvalidBand(String),
    #[error("cutoff {cutoff_hz} Hz is not below Nyquist ({nyquist_hz} Hz)")]
    AboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("designed cascade is unstable (max pole modulus {0})")]
    Unstable(f64),
}

// ---------------------------------------------------------------------------
// Band specification
// ---------------------------------------------------------------------------

/// One bandpass band: `[low_cut, high_cut]` at a given sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub order: usize,
    pub sample_rate_hz: f64,
}

impl BandSpec {
    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.sample_rate_hz <= 0.0 {
            return Err(FilterError::InvalidBand(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.low_cut_hz >= 0.0 && self.low_cut_hz < self.high_cut_hz) {
            return Err(FilterError::InvalidBand(format!(
                "need 0 <= low < high, got ({}, {})",
                self.low_cut_hz, self.high_cut_hz
            )));
        }
        if self.high_cut_hz > self.nyquist_hz() {
            return Err(FilterError::AboveNyquist {
                cutoff_hz: self.high_cut_hz,
                nyquist_hz: self.nyquist_hz(),
            });
        }
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(FilterError::InvalidBand(format!(
                "order must be even and >= 2, got {}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Builds the band list from a cutoff ladder: band i = (cutoffs[i], cutoffs[i+1]).
pub fn bands_from_cutoffs(cutoffs: &[f64], order: usize, sample_rate_hz: f64) -> Vec<BandSpec> {
    cutoffs
        .windows(2)
        .map(|edge| BandSpec {
            low_cut_hz: edge[0],
            high_cut_hz: edge[1],
            order,
            sample_rate_hz,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Biquad cascade
// ---------------------------------------------------------------------------

/// One second-order section with transposed direct form II state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    #[serde(skip)]
    z1: f64,
    #[serde(skip)]
    z2: f64,
}

impl BiquadSection {
    fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self {
            b0: b[0],
            b1: b[1],
            b2: b[2],
            a1: a[0],
            a2: a[1],
            z1: 0.0,
            z2: 0.0,
        }
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }

    /// Largest pole modulus of `z^2 + a1 z + a2`.
    fn max_pole_modulus(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            // Conjugate pair: |p|^2 = a2.
            self.a2.sqrt()
        } else {
            let r = disc.sqrt();
            let p1 = (-self.a1 + r) / 2.0;
            let p2 = (-self.a1 - r) / 2.0;
            p1.abs().max(p2.abs())
        }
    }
}

/// Cascaded second-order sections of one designed band filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<BiquadSection>,
    pub sample_rate_hz: f64,
}

impl BiquadCascade {
    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.z1 = 0.0;
            s.z2 = 0.0;
        }
    }

    pub fn max_pole_modulus(&self) -> f64 {
        self.sections
            .iter()
            .map(BiquadSection::max_pole_modulus)
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_modulus() < 1.0
    }

    /// Magnitude of the cascade's transfer function at `freq_hz`, evaluated
    /// on the unit circle.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = Complex64::new(s.b0, 0.0) + s.b1 * z1 + s.b2 * z2;
                let den = Complex64::new(1.0, 0.0) + s.a1 * z1 + s.a2 * z2;
                (num / den).norm()
            })
            .product()
    }
}

// ---------------------------------------------------------------------------
// Butterworth design (zero/pole/gain route)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FilterShape {
    Lowpass,
    Highpass,
    Bandpass,
}

/// Analog Butterworth prototype poles of order `n` (unit cutoff, left
/// half-plane, no zeros, unit gain).
fn butterworth_prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Bilinear prewarping: analog rad/s frequency whose image under the
/// bilinear transform lands exactly at `freq_hz`.
fn prewarp(freq_hz: f64, sample_rate_hz: f64) -> f64 {
    2.0 * sample_rate_hz * (PI * freq_hz / sample_rate_hz).tan()
}

/// Designs one band as cascaded biquads. A band with `low_cut = 0` becomes a
/// lowpass at `high_cut`; a band with `high_cut = Nyquist` becomes a highpass
/// at `low_cut`. `order` is the order of the realized filter in every case,
/// so each design yields `order / 2` sections.
pub fn design_butterworth_bandpass(spec: &BandSpec) -> Result<BiquadCascade, FilterError> {
    spec.validate()?;
    let nyquist = spec.nyquist_hz();
    let at_dc = spec.low_cut_hz == 0.0;
    let at_nyquist = spec.high_cut_hz >= nyquist;

    let shape = match (at_dc, at_nyquist) {
        (true, true) => {
            return Err(FilterError::InvalidBand(
                "band spans DC to Nyquist; nothing to reject".into(),
            ))
        }
        (true, false) => FilterShape::Lowpass,
        (false, true) => FilterShape::Highpass,
        (false, false) => FilterShape::Bandpass,
    };

    let fs = spec.sample_rate_hz;
    // Analog poles and gain of the transformed prototype. Zeros are implied
    // by the shape (at s=0 for highpass/bandpass, none for lowpass) and by
    // bilinear padding, so only their count is tracked.
    let (analog_poles, analog_zeros_at_origin, analog_gain) = match shape {
        FilterShape::Lowpass => {
            let wo = prewarp(spec.high_cut_hz, fs);
            let poles: Vec<Complex64> = butterworth_prototype_poles(spec.order)
                .into_iter()
                .map(|p| p * wo)
                .collect();
            (poles, 0usize, wo.powi(spec.order as i32))
        }
        FilterShape::Highpass => {
            let wo = prewarp(spec.low_cut_hz, fs);
            let poles: Vec<Complex64> = butterworth_prototype_poles(spec.order)
                .into_iter()
                .map(|p| wo / p)
                .collect();
            // lp2hp gain factor Re(1/prod(-p)) is 1 for a Butterworth
            // prototype (its poles multiply to +-1 with even conjugate
            // symmetry), so the gain stays 1.
            (poles, spec.order, 1.0)
        }
        FilterShape::Bandpass => {
            let wl = prewarp(spec.low_cut_hz, fs);
            let wh = prewarp(spec.high_cut_hz, fs);
            let wo = (wl * wh).sqrt();
            let bw = wh - wl;
            let proto = butterworth_prototype_poles(spec.order / 2);
            let mut poles = Vec::with_capacity(spec.order);
            for p in proto {
                let p_lp = p * bw / 2.0;
                let disc = (p_lp * p_lp - Complex64::new(wo * wo, 0.0)).sqrt();
                poles.push(p_lp + disc);
                poles.push(p_lp - disc);
            }
            (poles, spec.order / 2, (bw).powi((spec.order / 2) as i32))
        }
    };

    // Bilinear transform of poles and overall gain.
    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let digital_poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|&p| (fs2 + p) / (fs2 - p))
        .collect();
    let num: Complex64 = (0..analog_zeros_at_origin).map(|_| fs2).product();
    let den: Complex64 = analog_poles.iter().map(|&p| fs2 - p).product();
    let digital_gain = analog_gain * (num / den).re;

    // Digital zero structure per shape: lowpass has all zeros at -1,
    // highpass all at +1, bandpass half at +1 and half at -1, so each
    // section's numerator shape is fixed.
    let section_numerator = match shape {
        FilterShape::Lowpass => [1.0, 2.0, 1.0],
        FilterShape::Highpass => [1.0, -2.0, 1.0],
        FilterShape::Bandpass => [1.0, 0.0, -1.0],
    };

    let pairs = conjugate_pole_pairs(&digital_poles)?;
    let section_gain = digital_gain.powf(1.0 / pairs.len() as f64);
    let sections = pairs
        .into_iter()
        .map(|(a1, a2)| {
            BiquadSection::new(
                [
                    section_gain * section_numerator[0],
                    section_gain * section_numerator[1],
                    section_gain * section_numerator[2],
                ],
                [a1, a2],
            )
        })
        .collect();

    let cascade = BiquadCascade {
        sections,
        sample_rate_hz: fs,
    };
    if !cascade.is_stable() {
        return Err(FilterError::Unstable(cascade.max_pole_modulus()));
    }
    Ok(cascade)
}

/// Groups digital poles into conjugate pairs and returns each pair's
/// denominator coefficients `(a1, a2)` of `z^2 + a1 z + a2`.
fn conjugate_pole_pairs(poles: &[Complex64]) -> Result<Vec<(f64, f64)>, FilterError> {
    const IM_TOL: f64 = 1e-9;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IM_TOL).collect();
    let lower: Vec<Complex64> = poles.iter().copied().filter(|p| p.im < -IM_TOL).collect();
    let mut real: Vec<f64> = poles
        .iter()
        .copied()
        .filter(|p| p.im.abs() <= IM_TOL)
        .map(|p| p.re)
        .collect();
    if upper.len() != lower.len() || !real.len().is_multiple_of(2) {
        return Err(FilterError::InvalidBand(format!(
            "poles do not form conjugate pairs: {poles:?}"
        )));
    }
    upper.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    real.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut pairs: Vec<(f64, f64)> = upper.iter().map(|p| (-2.0 * p.re, p.norm_sqr())).collect();
    for chunk in real.chunks(2) {
        pairs.push((-(chunk[0] + chunk[1]), chunk[0] * chunk[1]));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

/// Runs a signal through the cascade (causal, stateful). Output length
/// equals input length.
pub fn apply_filter(cascade: &mut BiquadCascade, signal: &[f64]) -> Vec<f64> {
    signal.iter().map(|&x| cascade.process(x)).collect()
}

/// Full-wave rectification: `|x|` elementwise. LIF injection currents must
/// be nonnegative.
pub fn full_wave_rectify(signal: &[f64]) -> Vec<f64> {
    signal.iter().map(|x| x.abs()).collect()
}

/// Expands a window's channels through the filterbank: row
/// `band * channels + channel` holds `rectify(filter_band(channel))`.
/// Ordering is band-major and fixed. Each (band, channel) pair runs a fresh
/// zero-state cascade.
pub fn expand_channels(window: &Window, bands: &[BandSpec]) -> Result<Vec<Vec<f64>>, FilterError> {
    let designs: Vec<BiquadCascade> = bands
        .iter()
        .map(design_butterworth_bandpass)
        .collect::<Result<_, _>>()?;
    Ok(expand_channels_with(window, &designs))
}

/// [`expand_channels`] against already-designed cascades, for callers that
/// process many windows through the same filterbank.
pub fn expand_channels_with(window: &Window, designs: &[BiquadCascade]) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(designs.len() * window.num_channels());
    for design in designs {
        for channel in &window.samples {
            let mut cascade = design.clone();
            rows.push(full_wave_rectify(&apply_filter(&mut cascade, channel)));
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
