use std::f64::consts::PI;

use neuresonance_core::signal::{
    apply_bandpass, instantaneous_phase, slide_windows, BandpassFilter, FilterMode, FilterSpec,
    Participant, SampleFrame,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 256.0;

fn tone(freq: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / FS).sin()).collect()
}

/// Amplitude of the strongest DFT bin, computed directly (no FFT).
fn dft_peak_amplitude(x: &[f64]) -> f64 {
    let n = x.len();
    (1..n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let a = -2.0 * PI * (j * k % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            2.0 * (re * re + im * im).sqrt() / n as f64
        })
        .fold(0.0, f64::max)
}

#[test]
fn sixty_hz_is_attenuated_twenty_db_in_zero_phase_mode() {
    let spec = FilterSpec::offline();
    // 640 interior samples hold whole cycles of both tones.
    let pass = apply_bandpass(spec, &tone(10.0, 768), FS).unwrap();
    let stop = apply_bandpass(spec, &tone(60.0, 768), FS).unwrap();
    let ratio = dft_peak_amplitude(&stop[64..704]) / dft_peak_amplitude(&pass[64..704]);
    let db = 20.0 * ratio.log10();
    assert!(db <= -20.0, "attenuation only {db:.1} dB");
}

#[test]
fn magnitude_response_matches_reference_design() {
    // scipy.signal.butter(4, [1, 48], "bandpass", fs=256, output="sos")
    let filter = BandpassFilter::design(FilterSpec::realtime(), FS).unwrap();
    assert!((filter.magnitude_at(60.0) - 0.274_536_92).abs() < 1e-6);
    assert!((filter.magnitude_at(10.0) - 1.0).abs() < 1e-3);
}

#[test]
fn filter_is_stable_on_a_million_bounded_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let input: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(-1.0..=1.0)).collect();
    for mode in [FilterMode::Causal, FilterMode::ZeroPhase] {
        let out = apply_bandpass(FilterSpec::realtime().with_mode(mode), &input, FS).unwrap();
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 10.0, "{mode:?} peak {peak}");
    }
}

proptest! {
    #[test]
    fn filter_is_linear(
        seed in any::<u64>(),
        scale in -10.0f64..10.0,
        zero_phase in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..512).map(|_| rng.random_range(-50.0..50.0)).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let mode = if zero_phase { FilterMode::ZeroPhase } else { FilterMode::Causal };
        let spec = FilterSpec::realtime().with_mode(mode);
        let y = apply_bandpass(spec, &x, FS).unwrap();
        let ys = apply_bandpass(spec, &scaled, FS).unwrap();
        for (a, b) in y.iter().zip(&ys) {
            prop_assert!((a * scale - b).abs() < 1e-9);
        }
    }

    #[test]
    fn phases_stay_half_open(seed in any::<u64>(), len in 64usize..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        for p in instantaneous_phase(&x).unwrap() {
            prop_assert!(p > -PI && p <= PI);
        }
    }

    #[test]
    fn window_count_formula(samples in 768usize..4000, hop_tenths in 1u32..=30) {
        let hop_s = f64::from(hop_tenths) / 10.0;
        let frames: Vec<SampleFrame> = (0..samples)
            .map(|i| SampleFrame::new(0, (i as u64 * 1_000_000) / 256, vec![0.0]))
            .collect();
        let out = slide_windows(&frames, Participant::A, 1, FS, 3.0, hop_s).unwrap();
        let hop = (hop_s * FS).round() as usize;
        prop_assert_eq!(out.windows.len(), (samples - 768) / hop + 1);
        prop_assert!(out.gaps.is_empty());
    }
}
