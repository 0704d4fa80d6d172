//! Signal-processing and synchrony primitives for dual-EEG neurofeedback.
//!
//! This crate is `no_std` (it needs `alloc`) and contains only pure
//! computation:
//!
//! - [`signal`]: Butterworth band-pass filtering, analytic-signal phase
//!   extraction and sliding-window epoching.
//! - [`metric`]: circular mean, circular correlation (CCorr), Fisher z
//!   pooling and the end-to-end inter-brain synchrony metric.
//! - [`motion`]: velocity estimation from motion capture and the
//!   hold-last-valid motion gate.
//! - [`feedback`]: five-level quantization, visual/auditory/haptic mappings
//!   and the OSC packet encoder.
//!
//! IO, wire formats, the engine and the CLI live in the `neuresonance` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod feedback;
pub mod fft;
pub mod metric;
pub mod motion;
pub mod signal;

pub use feedback::{
    map_audio, map_haptic, map_visual, quantize_level, AudioPreset, BinEdges, ChordSpec,
    FeedbackLevel, HapticPattern, HapticTable, RingSpec, VisualConfig,
};
pub use metric::{
    ccorr, circular_mean, compute_ibs, fisher_z, inverse_fisher_z, pool_top_k,
    ChannelCorrelations, IbsConfig, IbsMetric, MetricError,
};
pub use motion::{
    classify_segment, estimate_velocities, gate, MotionError, MotionGate, MotionSample,
    MotionThresholds, MotionVerdict, Velocity,
};
pub use signal::{
    apply_bandpass, instantaneous_phase, slide_windows, BandpassFilter, EpochWindow, FilterMode,
    FilterSpec, Participant, SampleFrame, SignalError, StreamWindower,
};

/// Default EEG channel count (Emotiv-style 14-channel montage).
pub const DEFAULT_CHANNELS: usize = 14;
/// Default EEG sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 256.0;
/// Microseconds per second.
pub const MICROS_PER_SECOND: f64 = 1_000_000.0;
