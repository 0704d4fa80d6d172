//! Butterworth band-pass filters realised as a cascade of second-order
//! sections.
//!
//! Design follows the textbook route: analog low-pass prototype poles,
//! low-pass to band-pass transform, then the bilinear transform with both
//! band edges prewarped. Every section has zeros at `z = 1` and `z = -1`
//! and the cascade is normalised to unit gain at the geometric band centre.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use num_complex::Complex64;

use super::SignalError;

/// Causal filtering is streaming-safe; zero-phase runs the cascade forward
/// and then backward so the net group delay is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FilterMode {
    Causal,
    ZeroPhase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterSpec {
    /// Lower -3 dB edge in Hz.
    pub low_cut: f64,
    /// Upper -3 dB edge in Hz.
    pub high_cut: f64,
    /// Order of the low-pass prototype; the band-pass has twice as many poles.
    pub order: usize,
    pub mode: FilterMode,
}

impl FilterSpec {
    pub const fn new(low_cut: f64, high_cut: f64, order: usize, mode: FilterMode) -> Self {
        Self {
            low_cut,
            high_cut,
            order,
            mode,
        }
    }

    /// 1–48 Hz, 4th order, causal: the real-time path.
    pub const fn realtime() -> Self {
        Self::new(1.0, 48.0, 4, FilterMode::Causal)
    }

    /// 1–48 Hz, 4th order, forward-backward: the offline path.
    pub const fn offline() -> Self {
        Self::new(1.0, 48.0, 4, FilterMode::ZeroPhase)
    }

    pub fn with_mode(mut self, mode: FilterMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self, sample_rate: f64) -> Result<(), SignalError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SignalError::InvalidFilter("sample rate must be positive"));
        }
        if self.order == 0 {
            return Err(SignalError::InvalidFilter("order must be at least 1"));
        }
        if !(self.low_cut.is_finite() && self.high_cut.is_finite()) {
            return Err(SignalError::InvalidFilter("cut frequencies must be finite"));
        }
        if self.low_cut <= 0.0 {
            return Err(SignalError::InvalidFilter("low cut must be above 0 Hz"));
        }
        if self.low_cut >= self.high_cut {
            return Err(SignalError::InvalidFilter("low cut must be below high cut"));
        }
        if self.high_cut >= sample_rate / 2.0 {
            return Err(SignalError::InvalidFilter("high cut must be below Nyquist"));
        }
        Ok(())
    }

    /// Shortest signal `apply_bandpass` accepts.
    pub fn min_len(&self) -> usize {
        3 * self.order
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self::realtime()
    }
}

/// One transposed direct-form II second-order section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let zi2 = zi * zi;
        (self.b[0] + zi * self.b[1] + zi2 * self.b[2]) / (self.a[0] + zi * self.a[1] + zi2 * self.a[2])
    }
}

/// A designed band-pass cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    spec: FilterSpec,
    sample_rate: f64,
    sections: Vec<Biquad>,
}

impl BandpassFilter {
    pub fn design(spec: FilterSpec, sample_rate: f64) -> Result<Self, SignalError> {
        spec.validate(sample_rate)?;
        let fs2 = 2.0 * sample_rate;
        let w_low = fs2 * (PI * spec.low_cut / sample_rate).tan();
        let w_high = fs2 * (PI * spec.high_cut / sample_rate).tan();
        let bandwidth = w_high - w_low;
        let w_centre_sq = w_low * w_high;

        let n = spec.order;
        let mut z_poles = Vec::with_capacity(2 * n);
        for k in 0..n {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let proto = Complex64::new(theta.cos(), theta.sin());
            let half = proto * (bandwidth / 2.0);
            let disc = (half * half - w_centre_sq).sqrt();
            for s in [half + disc, half - disc] {
                z_poles.push((fs2 + s) / (fs2 - s));
            }
        }

        let sections: Vec<Biquad> = pair_poles(&z_poles)
            .into_iter()
            .map(|(p1, p2)| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -(p1 + p2).re, (p1 * p2).re],
            })
            .collect();

        // Unit gain at the (digital image of the) geometric band centre.
        let centre_hz = sample_rate / PI * (w_centre_sq.sqrt() / fs2).atan();
        let omega = 2.0 * PI * centre_hz / sample_rate;
        let z0 = Complex64::new(omega.cos(), omega.sin());
        let gain: f64 = sections.iter().map(|s| s.response(z0).norm()).product();
        let per_section = gain.powf(-1.0 / sections.len() as f64);
        let sections = sections
            .into_iter()
            .map(|mut s| {
                for b in &mut s.b {
                    *b *= per_section;
                }
                s
            })
            .collect();

        Ok(Self {
            spec,
            sample_rate,
            sections,
        })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate;
        let z = Complex64::new(omega.cos(), omega.sin());
        self.sections.iter().map(|s| s.response(z).norm()).product()
    }

    /// Filters `signal` in the spec's mode.
    pub fn apply(&self, signal: &[f64]) -> Result<Vec<f64>, SignalError> {
        let min = self.spec.min_len();
        if signal.len() < min {
            return Err(SignalError::InputTooShort {
                len: signal.len(),
                min,
            });
        }
        Ok(match self.spec.mode {
            FilterMode::Causal => self.run_causal(signal),
            FilterMode::ZeroPhase => self.run_zero_phase(signal),
        })
    }

    /// Streaming state, primed as if `first` had been applied forever.
    pub fn stream(&self, first: f64) -> FilterState {
        FilterState::primed(self, first)
    }

    fn run_causal(&self, signal: &[f64]) -> Vec<f64> {
        let mut state = self.stream(signal[0]);
        signal.iter().map(|&x| state.process(x)).collect()
    }

    fn run_zero_phase(&self, signal: &[f64]) -> Vec<f64> {
        let len = signal.len();
        let pad = (3 * (2 * self.spec.order + 1)).min(len - 1);
        // Odd extension about both end points.
        let mut extended = Vec::with_capacity(len + 2 * pad);
        let first = signal[0];
        let last = signal[len - 1];
        extended.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
        extended.extend_from_slice(signal);
        extended.extend((1..=pad).map(|i| 2.0 * last - signal[len - 1 - i]));

        let mut forward = self.run_causal(&extended);
        forward.reverse();
        let mut backward = self.run_causal(&forward);
        backward.reverse();
        backward.drain(..pad);
        backward.truncate(len);
        backward
    }
}

/// Sample-by-sample state of a causal cascade.
#[derive(Debug, Clone)]
pub struct FilterState {
    sections: Vec<Biquad>,
    state: Vec<[f64; 2]>,
}

impl FilterState {
    fn primed(filter: &BandpassFilter, first: f64) -> Self {
        let sections = filter.sections.clone();
        let mut state = vec![[0.0; 2]; sections.len()];
        // Every section blocks DC, so for a constant input only the first
        // section carries non-zero steady-state memory.
        if let Some(s) = sections.first() {
            state[0] = [(s.b[1] + s.b[2]) * first, s.b[2] * first];
        }
        Self { sections, state }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut value = x;
        for (s, st) in self.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b[0] * value + st[0];
            st[0] = s.b[1] * value - s.a[1] * y + st[1];
            st[1] = s.b[2] * value - s.a[2] * y;
            value = y;
        }
        value
    }
}

/// Groups z-plane poles into conjugate (or real) pairs, one per section.
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    const IMAG_EPS: f64 = 1e-12;
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        if p.im > IMAG_EPS {
            pairs.push((p, p.conj()));
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(Complex64::new(p.re, 0.0));
        }
    }
    reals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(core::cmp::Ordering::Equal));
    for chunk in reals.chunks(2) {
        match chunk {
            [a, b] => pairs.push((*a, *b)),
            // An odd real pole cannot occur for band-pass designs (poles come
            // in pairs per prototype pole).
            [a] => pairs.push((*a, Complex64::new(0.0, 0.0))),
            _ => unreachable!(),
        }
    }
    pairs
}

/// One-shot band-pass of `signal` sampled at `sample_rate`.
pub fn apply_bandpass(
    spec: FilterSpec,
    signal: &[f64],
    sample_rate: f64,
) -> Result<Vec<f64>, SignalError> {
    BandpassFilter::design(spec, sample_rate)?.apply(signal)
}
