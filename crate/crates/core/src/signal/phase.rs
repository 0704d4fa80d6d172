//! Instantaneous phase from the analytic signal.
//!
//! The analytic signal is built in the frequency domain: transform, zero the
//! negative frequencies, double the positive ones, transform back. The phase
//! is the argument of the result, wrapped into `(-π, π]`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use num_complex::Complex64;

use super::SignalError;
use crate::fft::FftPlan;

/// Shortest series for which phase extraction is attempted.
pub const MIN_PHASE_SAMPLES: usize = 64;

/// Reusable analytic-signal transformer for one series length.
#[derive(Debug, Clone)]
pub struct PhaseExtractor {
    plan: FftPlan,
}

impl PhaseExtractor {
    pub fn new(len: usize) -> Self {
        Self {
            plan: FftPlan::new(len.max(1)),
        }
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    /// Complex analytic signal of `signal`; its real part reproduces the input.
    pub fn analytic(&self, signal: &[f64]) -> Result<Vec<Complex64>, SignalError> {
        let n = signal.len();
        if n < MIN_PHASE_SAMPLES {
            return Err(SignalError::InputTooShort {
                len: n,
                min: MIN_PHASE_SAMPLES,
            });
        }
        assert_eq!(n, self.plan.len(), "extractor built for a different length");
        if signal.iter().all(|&x| x == 0.0) {
            return Err(SignalError::UndefinedPhase);
        }
        if signal.iter().any(|x| !x.is_finite()) {
            return Err(SignalError::NonFinite);
        }

        let input: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
        self.plan.forward(&input, &mut spectrum);

        let half = n / 2;
        for (k, bin) in spectrum.iter_mut().enumerate() {
            let weight = if k == 0 || (n.is_multiple_of(2) && k == half) {
                1.0
            } else if k < n.div_ceil(2) {
                2.0
            } else {
                0.0
            };
            *bin *= weight;
        }
        let mut analytic = vec![Complex64::new(0.0, 0.0); n];
        self.plan.inverse(&spectrum, &mut analytic);
        Ok(analytic)
    }

    pub fn phase(&self, signal: &[f64]) -> Result<Vec<f64>, SignalError> {
        Ok(self
            .analytic(signal)?
            .iter()
            .map(|z| wrap_half_open(z.im.atan2(z.re)))
            .collect())
    }
}

/// Maps an angle from `atan2` (range `[-π, π]`) into `(-π, π]`.
fn wrap_half_open(angle: f64) -> f64 {
    if angle <= -PI {
        angle + 2.0 * PI
    } else {
        angle
    }
}

/// Per-sample phase of a band-limited `signal`, each value in `(-π, π]`.
pub fn instantaneous_phase(signal: &[f64]) -> Result<Vec<f64>, SignalError> {
    if signal.len() < MIN_PHASE_SAMPLES {
        return Err(SignalError::InputTooShort {
            len: signal.len(),
            min: MIN_PHASE_SAMPLES,
        });
    }
    PhaseExtractor::new(signal.len()).phase(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec::Vec;

    const FS: f64 = 256.0;

    fn wave(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| f(i as f64 / FS)).collect()
    }

    fn wrap(d: f64) -> f64 {
        let mut d = d % (2.0 * PI);
        if d > PI {
            d -= 2.0 * PI;
        } else if d <= -PI {
            d += 2.0 * PI;
        }
        d
    }

    #[test]
    fn phase_slope_of_pure_tone() {
        let x = wave(|t| (2.0 * PI * 8.0 * t).sin(), 768);
        let phase = instantaneous_phase(&x).unwrap();
        let expected = 2.0 * PI * 8.0 / FS;
        for i in 32..(768 - 33) {
            let step = wrap(phase[i + 1] - phase[i]);
            assert!((step - expected).abs() < 1e-2, "sample {i}: {step}");
        }
    }

    #[test]
    fn cosine_leads_sine_by_quarter_cycle() {
        let c = instantaneous_phase(&wave(|t| (2.0 * PI * 10.0 * t).cos(), 768)).unwrap();
        let s = instantaneous_phase(&wave(|t| (2.0 * PI * 10.0 * t).sin(), 768)).unwrap();
        for i in 32..736 {
            assert!((wrap(c[i] - s[i]) - PI / 2.0).abs() < 1e-2);
        }
    }

    #[test]
    fn negation_shifts_by_pi() {
        let x = wave(|t| (2.0 * PI * 6.0 * t).sin() + 0.4 * (2.0 * PI * 11.0 * t).cos(), 512);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let a = instantaneous_phase(&x).unwrap();
        let b = instantaneous_phase(&neg).unwrap();
        for i in 32..480 {
            assert!((wrap(a[i] - b[i]).abs() - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn phases_are_half_open() {
        let x = wave(|t| (2.0 * PI * 32.0 * t).cos(), 256);
        for p in instantaneous_phase(&x).unwrap() {
            assert!(p > -PI && p <= PI);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(instantaneous_phase(&[0.0; 128]), Err(SignalError::UndefinedPhase));
        assert_eq!(
            instantaneous_phase(&[1.0; 63]),
            Err(SignalError::InputTooShort { len: 63, min: 64 })
        );
    }

    #[test]
    fn odd_length_analytic_real_part_matches() {
        let x = wave(|t| (2.0 * PI * 7.0 * t).sin(), 101);
        let z = PhaseExtractor::new(101).analytic(&x).unwrap();
        for (a, b) in x.iter().zip(&z) {
            assert!((a - b.re).abs() < 1e-9);
        }
    }
}
