//! Synthetic dual-EEG and head-motion source with controllable coupling.
//!
//! Each channel of participant A carries a random-walk oscillator: its
//! instantaneous frequency follows an Ornstein–Uhlenbeck process around a
//! per-channel centre inside the carrier band. Participant B mixes A's
//! unwrapped phase with an independent oscillator of its own,
//! `φ_B = κ·φ_A + (1 − κ)·φ_B' + ε`, so κ = 0 gives unrelated phases and
//! κ = 1 locks B to A up to the phase noise ε. Signals are
//! `amplitude·sin(φ)` plus pink noise and a DC offset.
//!
//! Artifact bursts move the participant's head out and back at a constant
//! speed and add a slow deflection plus broadband muscle-like noise to
//! every EEG channel.

use std::f64::consts::TAU;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use neuresonance_core::{MotionSample, Participant, SampleFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::recording::{CouplingPoint, Manifest, MarkerKind, Recording, TrialMarker};
use super::{default_streams, StreamIds};
use crate::session::Condition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierBand {
    Theta,
    #[default]
    Alpha,
    Beta,
}

impl CarrierBand {
    pub fn range_hz(self) -> (f64, f64) {
        match self {
            CarrierBand::Theta => (4.0, 8.0),
            CarrierBand::Alpha => (8.0, 13.0),
            CarrierBand::Beta => (13.0, 30.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactBurst {
    pub start_s: f64,
    pub duration_s: f64,
    pub participant: Participant,
}

impl ArtifactBurst {
    fn offset_s(&self, t: f64) -> Option<f64> {
        let s = t - self.start_s;
        (s >= 0.0 && s < self.duration_s).then_some(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub sample_rate: f64,
    pub channel_count: usize,
    /// κ in `[0, 1]`.
    pub coupling: f64,
    pub carrier_band: CarrierBand,
    /// RMS of the pink background noise, µV.
    pub noise_sigma: f64,
    /// Carrier amplitude, µV.
    pub carrier_amplitude: f64,
    /// Standard deviation of the white phase noise on B, radians.
    pub phase_noise: f64,
    /// Standard deviation of the carrier frequency jitter, Hz.
    pub frequency_jitter_hz: f64,
    /// Correlation time of the frequency jitter, seconds.
    pub jitter_time_s: f64,
    pub dc_offset: f64,
    pub motion_rate: f64,
    pub artifact_schedule: Vec<ArtifactBurst>,
    pub burst_speed_mm_s: f64,
    pub burst_deflection_uv: f64,
    pub burst_noise_uv: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate: 256.0,
            channel_count: 14,
            coupling: 0.0,
            carrier_band: CarrierBand::Alpha,
            noise_sigma: 5.0,
            carrier_amplitude: 10.0,
            phase_noise: 0.05,
            frequency_jitter_hz: 1.0,
            jitter_time_s: 0.5,
            dc_offset: 4200.0,
            motion_rate: 100.0,
            artifact_schedule: Vec::new(),
            burst_speed_mm_s: 250.0,
            burst_deflection_uv: 150.0,
            burst_noise_uv: 30.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("coupling {0} outside [0, 1]")]
    Coupling(f64),
    #[error("invalid synthetic source configuration: {0}")]
    Config(&'static str),
    #[error("artifact burst at {start_s} s for {duration_s} s does not fit in {total_s} s")]
    Burst {
        start_s: f64,
        duration_s: f64,
        total_s: f64,
    },
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        check_coupling(self.coupling)?;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !non_negative(self.duration_s) {
            return Err(SynthError::Config("duration must be non-negative"));
        }
        if !positive(self.sample_rate) || !positive(self.motion_rate) {
            return Err(SynthError::Config("sample rates must be positive"));
        }
        if self.channel_count == 0 || self.channel_count > 255 {
            return Err(SynthError::Config("channel count must be in 1..=255"));
        }
        if ![
            self.noise_sigma,
            self.carrier_amplitude,
            self.phase_noise,
            self.frequency_jitter_hz,
            self.burst_speed_mm_s,
            self.burst_deflection_uv,
            self.burst_noise_uv,
        ]
        .into_iter()
        .all(non_negative)
            || !positive(self.jitter_time_s)
            || !self.dc_offset.is_finite()
        {
            return Err(SynthError::Config("amplitudes and noise levels must be finite and non-negative"));
        }
        for b in &self.artifact_schedule {
            if !(b.start_s >= 0.0 && b.duration_s > 0.0 && b.start_s + b.duration_s <= self.duration_s)
            {
                return Err(SynthError::Burst {
                    start_s: b.start_s,
                    duration_s: b.duration_s,
                    total_s: self.duration_s,
                });
            }
        }
        Ok(())
    }
}

fn check_coupling(kappa: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&kappa) {
        Ok(())
    } else {
        Err(SynthError::Coupling(kappa))
    }
}

/// Shared, thread-safe knob for changing κ while the source runs.
#[derive(Debug, Clone)]
pub struct CouplingHandle(Arc<AtomicU64>);

impl CouplingHandle {
    fn new(kappa: f64) -> Self {
        Self(Arc::new(AtomicU64::new(kappa.to_bits())))
    }

    pub fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    pub fn set(&self, kappa: f64) -> Result<(), SynthError> {
        check_coupling(kappa)?;
        self.0.store(kappa.to_bits(), Ordering::Relaxed);
        Ok(())
    }
}

/// First-order sections approximating a 1/f spectrum (Kellet's economy
/// filter), normalized to unit output variance for unit white input.
#[derive(Debug, Clone, Default)]
struct PinkNoise {
    state: [f64; 3],
}

const PINK_POLES: [f64; 3] = [0.99765, 0.96300, 0.57000];
const PINK_GAINS: [f64; 3] = [0.0990460, 0.2965164, 1.0526913];
const PINK_DIRECT: f64 = 0.1848;

fn pink_gain() -> f64 {
    let mut var = PINK_DIRECT * PINK_DIRECT;
    for i in 0..3 {
        var += 2.0 * PINK_DIRECT * PINK_GAINS[i];
        for j in 0..3 {
            var += PINK_GAINS[i] * PINK_GAINS[j] / (1.0 - PINK_POLES[i] * PINK_POLES[j]);
        }
    }
    var.sqrt().recip()
}

impl PinkNoise {
    fn next(&mut self, white: f64) -> f64 {
        let mut out = PINK_DIRECT * white;
        for ((s, a), b) in self.state.iter_mut().zip(PINK_POLES).zip(PINK_GAINS) {
            *s = a * *s + b * white;
            out += *s;
        }
        out
    }
}

/// Band-limited random-walk oscillator.
#[derive(Debug, Clone)]
struct Oscillator {
    centre_hz: f64,
    freq_hz: f64,
    phase: f64,
}

impl Oscillator {
    fn new(centre_hz: f64, phase: f64) -> Self {
        Self {
            centre_hz,
            freq_hz: centre_hz,
            phase,
        }
    }

    fn step(&mut self, dt: f64, jitter: &Jitter, noise: f64) {
        self.phase += TAU * self.freq_hz * dt;
        self.freq_hz += (self.centre_hz - self.freq_hz) * jitter.decay + jitter.kick * noise;
        self.freq_hz = self.freq_hz.clamp(jitter.low, jitter.high);
    }
}

struct Jitter {
    decay: f64,
    kick: f64,
    low: f64,
    high: f64,
}

struct ChannelState {
    a: Oscillator,
    b_own: Oscillator,
    pink: [PinkNoise; 2],
}

/// Incremental generator of the four synthetic streams.
pub struct SynthSource {
    config: SynthConfig,
    ids: StreamIds,
    coupling: CouplingHandle,
    last_coupling: Option<f64>,
    trace: Vec<CouplingPoint>,
    eeg_rng: ChaCha8Rng,
    motion_rng: ChaCha8Rng,
    channels: Vec<ChannelState>,
    jitter: Jitter,
    pink_gain: f64,
    eeg_index: u64,
    eeg_total: u64,
    motion_index: u64,
    motion_total: u64,
    sway_phase: [f64; 2],
}

fn eeg_timestamp(n: u64, fs: f64) -> u64 {
    (n as f64 * 1e6 / fs).floor() as u64
}

impl SynthSource {
    pub fn new(config: SynthConfig) -> Result<Self, SynthError> {
        Self::with_streams(config, StreamIds::default())
    }

    pub fn with_streams(config: SynthConfig, ids: StreamIds) -> Result<Self, SynthError> {
        config.validate()?;
        let mut setup = ChaCha8Rng::seed_from_u64(config.seed);
        let mut eeg_rng = ChaCha8Rng::seed_from_u64(config.seed);
        eeg_rng.set_stream(1);
        let mut motion_rng = ChaCha8Rng::seed_from_u64(config.seed);
        motion_rng.set_stream(2);

        let (lo, hi) = config.carrier_band.range_hz();
        let margin = 0.15 * (hi - lo);
        let centre = |rng: &mut ChaCha8Rng| lo + margin + (hi - lo - 2.0 * margin) * rng.random::<f64>();
        let channels = (0..config.channel_count)
            .map(|_| {
                let fa = centre(&mut setup);
                let fb = centre(&mut setup);
                ChannelState {
                    a: Oscillator::new(fa, TAU * setup.random::<f64>()),
                    b_own: Oscillator::new(fb, TAU * setup.random::<f64>()),
                    pink: Default::default(),
                }
            })
            .collect();
        let sway_phase = [TAU * setup.random::<f64>(), TAU * setup.random::<f64>()];

        let dt = config.sample_rate.recip();
        let decay = dt / config.jitter_time_s;
        let jitter = Jitter {
            decay,
            kick: config.frequency_jitter_hz * (2.0 * decay).sqrt(),
            low: lo,
            high: hi,
        };
        Ok(Self {
            eeg_total: (config.duration_s * config.sample_rate).round() as u64,
            motion_total: (config.duration_s * config.motion_rate).round() as u64,
            coupling: CouplingHandle::new(config.coupling),
            last_coupling: None,
            trace: Vec::new(),
            config,
            ids,
            eeg_rng,
            motion_rng,
            channels,
            jitter,
            pink_gain: pink_gain(),
            eeg_index: 0,
            motion_index: 0,
            sway_phase,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn coupling_handle(&self) -> CouplingHandle {
        self.coupling.clone()
    }

    /// κ changes observed so far, one point per change.
    pub fn coupling_trace(&self) -> &[CouplingPoint] {
        &self.trace
    }

    pub fn is_finished(&self) -> bool {
        self.eeg_index >= self.eeg_total && self.motion_index >= self.motion_total
    }

    /// Timestamp of the next frame, if any remain.
    pub fn next_timestamp_us(&self) -> Option<u64> {
        match (self.next_eeg_us(), self.next_motion_us()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn next_eeg_us(&self) -> Option<u64> {
        (self.eeg_index < self.eeg_total).then(|| eeg_timestamp(self.eeg_index, self.config.sample_rate))
    }

    fn next_motion_us(&self) -> Option<u64> {
        (self.motion_index < self.motion_total)
            .then(|| eeg_timestamp(self.motion_index, self.config.motion_rate))
    }

    /// Produces every frame with a timestamp below `until_us`, in timestamp
    /// order. At equal timestamps EEG precedes motion and A precedes B.
    pub fn frames_until(&mut self, until_us: u64) -> Vec<SampleFrame> {
        let mut out = Vec::new();
        loop {
            let eeg = self.next_eeg_us().filter(|&t| t < until_us);
            let motion = self.next_motion_us().filter(|&t| t < until_us);
            match (eeg, motion) {
                (Some(te), Some(tm)) if te <= tm => self.emit_eeg(te, &mut out),
                (Some(te), None) => self.emit_eeg(te, &mut out),
                (_, Some(tm)) => self.emit_motion(tm, &mut out),
                (None, None) => break,
            }
        }
        out
    }

    pub fn remaining_frames(&mut self) -> Vec<SampleFrame> {
        self.frames_until(u64::MAX)
    }

    fn emit_eeg(&mut self, ts: u64, out: &mut Vec<SampleFrame>) {
        let kappa = self.coupling.get();
        if self.last_coupling != Some(kappa) {
            self.last_coupling = Some(kappa);
            self.trace.push(CouplingPoint {
                timestamp_us: ts,
                kappa,
            });
        }
        let cfg = &self.config;
        let t = self.eeg_index as f64 / cfg.sample_rate;
        let dt = cfg.sample_rate.recip();
        let artifact = [Participant::A, Participant::B].map(|p| {
            cfg.artifact_schedule
                .iter()
                .filter(|b| b.participant == p)
                .find_map(|b| b.offset_s(t).map(|s| (s, b.duration_s)))
        });

        let mut a = Vec::with_capacity(cfg.channel_count);
        let mut b = Vec::with_capacity(cfg.channel_count);
        let rng = &mut self.eeg_rng;
        for ch in &mut self.channels {
            let phase_b = kappa * ch.a.phase + (1.0 - kappa) * ch.b_own.phase
                + cfg.phase_noise * rng.sample::<f64, _>(StandardNormal);
            let carriers = [ch.a.phase.sin(), phase_b.sin()];
            for (i, (values, carrier)) in [&mut a, &mut b].into_iter().zip(carriers).enumerate() {
                let pink = ch.pink[i].next(rng.sample(StandardNormal)) * self.pink_gain;
                let mut v = cfg.dc_offset + cfg.carrier_amplitude * carrier + cfg.noise_sigma * pink;
                if let Some((s, d)) = artifact[i] {
                    v += cfg.burst_deflection_uv * (std::f64::consts::PI * s / d).sin()
                        + cfg.burst_noise_uv * rng.sample::<f64, _>(StandardNormal);
                }
                values.push(v as f32);
            }
            ch.a.step(dt, &self.jitter, rng.sample(StandardNormal));
            ch.b_own.step(dt, &self.jitter, rng.sample(StandardNormal));
        }
        out.push(SampleFrame::new(self.ids.eeg_a, ts, a));
        out.push(SampleFrame::new(self.ids.eeg_b, ts, b));
        self.eeg_index += 1;
    }

    fn emit_motion(&mut self, ts: u64, out: &mut Vec<SampleFrame>) {
        let cfg = &self.config;
        let t = self.motion_index as f64 / cfg.motion_rate;
        for p in [Participant::A, Participant::B] {
            let i = p.index();
            let sway = self.sway_phase[i];
            let mut x = 5.0 * (TAU * 0.2 * t + sway).sin();
            let y = 3.0 * (TAU * 0.15 * t + 2.0 * sway).cos();
            for burst in cfg.artifact_schedule.iter().filter(|b| b.participant == p) {
                if let Some(s) = burst.offset_s(t) {
                    let half = burst.duration_s / 2.0;
                    x += cfg.burst_speed_mm_s * if s < half { s } else { burst.duration_s - s };
                }
            }
            let jitter: [f64; 3] = std::array::from_fn(|_| 0.05 * self.motion_rng.sample::<f64, _>(StandardNormal));
            let yaw = 0.05 * (TAU * 0.1 * t + sway).sin();
            let sample = MotionSample {
                participant: p,
                timestamp_us: ts,
                position: [x + jitter[0], y + jitter[1], 1500.0 + jitter[2]],
                orientation: [(yaw / 2.0).cos(), 0.0, 0.0, (yaw / 2.0).sin()],
            };
            let id = match p {
                Participant::A => self.ids.motion_a,
                Participant::B => self.ids.motion_b,
            };
            out.push(SampleFrame::new(id, ts, sample.to_channels().to_vec()));
        }
        self.motion_index += 1;
    }
}

/// Everything [`synth_dual_eeg`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// All four streams merged in timestamp order.
    pub frames: Vec<SampleFrame>,
    pub coupling_trace: Vec<CouplingPoint>,
}

pub fn synth_dual_eeg(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    let mut source = SynthSource::new(config.clone())?;
    let frames = source.remaining_frames();
    Ok(SynthOutput {
        frames,
        coupling_trace: source.coupling_trace().to_vec(),
    })
}

/// One block of a scripted synthetic session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub condition: Condition,
    pub coupling: f64,
    pub seconds: f64,
}

impl std::str::FromStr for TrialPlan {
    type Err = String;

    /// `Label:kappa:seconds`, e.g. `Non-sync:0:30`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.rsplitn(3, ':').collect();
        let [seconds, coupling, label] = parts[..] else {
            return Err(format!("expected Label:kappa:seconds, got {s:?}"));
        };
        let condition = label.parse::<Condition>().map_err(|e| e.to_string())?;
        let coupling: f64 = coupling.parse().map_err(|_| format!("bad coupling {coupling:?}"))?;
        check_coupling(coupling).map_err(|e| e.to_string())?;
        let seconds: f64 = seconds.parse().map_err(|_| format!("bad duration {seconds:?}"))?;
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(format!("bad duration {seconds}"));
        }
        Ok(TrialPlan {
            condition,
            coupling,
            seconds,
        })
    }
}

/// Generates a recording whose trials follow `plan` back to back, each with
/// its own coupling and a start/stop marker pair. `config.duration_s` is
/// replaced by the plan's total length.
pub fn synth_session(config: &SynthConfig, plan: &[TrialPlan]) -> Result<Recording, SynthError> {
    let mut config = config.clone();
    config.duration_s = plan.iter().map(|t| t.seconds).sum();
    if let Some(first) = plan.first() {
        config.coupling = first.coupling;
    }
    let mut source = SynthSource::new(config.clone())?;
    let handle = source.coupling_handle();
    let mut manifest = Manifest::new(
        format!("synth-{:016x}", config.seed),
        default_streams(&StreamIds::default(), config.channel_count, config.sample_rate, config.motion_rate),
    );
    manifest.config = serde_json::json!({ "synth": config, "plan": plan });
    let mut frames = Vec::new();
    let mut elapsed_s = 0.0_f64;
    for (i, trial) in plan.iter().enumerate() {
        handle.set(trial.coupling)?;
        let start_us = (elapsed_s * 1e6).round() as u64;
        elapsed_s += trial.seconds;
        let stop_us = (elapsed_s * 1e6).round() as u64;
        frames.extend(source.frames_until(stop_us));
        let trial_id = i as u32 + 1;
        manifest.markers.push(TrialMarker {
            timestamp_us: start_us,
            trial_id,
            kind: MarkerKind::Start,
            condition: Some(trial.condition),
        });
        manifest.markers.push(TrialMarker {
            timestamp_us: stop_us,
            trial_id,
            kind: MarkerKind::Stop,
            condition: None,
        });
    }
    frames.extend(source.remaining_frames());
    manifest.coupling_trace = source.coupling_trace().to_vec();
    Ok(Recording { manifest, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pink_noise_is_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pink = PinkNoise::default();
        let g = pink_gain();
        let n = 400_000;
        let var = (0..n)
            .map(|_| pink.next(rng.sample(StandardNormal)) * g)
            .map(|v| v * v)
            .sum::<f64>()
            / n as f64;
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn frame_counts_and_order() {
        let cfg = SynthConfig {
            duration_s: 2.0,
            ..SynthConfig::default()
        };
        let out = synth_dual_eeg(&cfg).unwrap();
        let count = |id| out.frames.iter().filter(|f| f.stream_id == id).count();
        assert_eq!((count(0), count(1), count(2), count(3)), (512, 512, 200, 200));
        assert!(out.frames.windows(2).all(|w| w[0].timestamp_us <= w[1].timestamp_us));
        assert_eq!(out.coupling_trace.len(), 1);
    }

    #[test]
    fn incremental_matches_batch() {
        let cfg = SynthConfig {
            duration_s: 1.0,
            seed: 9,
            ..SynthConfig::default()
        };
        let whole = synth_dual_eeg(&cfg).unwrap().frames;
        let mut src = SynthSource::new(cfg).unwrap();
        let mut parts = src.frames_until(333_333);
        parts.extend(src.frames_until(700_000));
        parts.extend(src.remaining_frames());
        assert_eq!(parts, whole);
        assert!(src.is_finished());
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut SynthConfig)| {
            let mut c = SynthConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.coupling = 1.2));
        assert!(bad(|c| c.sample_rate = 0.0));
        assert!(bad(|c| c.artifact_schedule.push(ArtifactBurst {
            start_s: 59.0,
            duration_s: 2.0,
            participant: Participant::A
        })));
        assert!(!bad(|_| {}));
    }

    #[test]
    fn trial_plan_parsing() {
        let t: TrialPlan = "No Feedback:0.8:30".parse().unwrap();
        assert_eq!(t.condition, Condition::NoFeedback);
        assert_eq!((t.coupling, t.seconds), (0.8, 30.0));
        assert!("Visual:1.5:30".parse::<TrialPlan>().is_err());
        assert!("Visual:30".parse::<TrialPlan>().is_err());
    }
}
