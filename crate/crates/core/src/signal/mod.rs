//! Filtering, instantaneous phase and epoching shared by the real-time and
//! offline paths.

mod filter;
mod phase;
mod window;

use alloc::vec::Vec;

pub use filter::{apply_bandpass, BandpassFilter, Biquad, FilterMode, FilterSpec, FilterState};
pub use phase::{instantaneous_phase, PhaseExtractor, MIN_PHASE_SAMPLES};
pub use window::{slide_windows, Gap, PushOutcome, StreamWindower, Windowing};

/// Which member of the dyad a stream or epoch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Participant {
    A,
    B,
}

impl Participant {
    pub fn index(self) -> usize {
        match self {
            Participant::A => 0,
            Participant::B => 1,
        }
    }
}

/// One timestamped multi-channel sample on one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame {
    pub stream_id: u8,
    /// Microseconds since session start.
    pub timestamp_us: u64,
    /// Amplitudes in microvolts (or the motion channel units).
    pub channels: Vec<f32>,
}

impl SampleFrame {
    pub fn new(stream_id: u8, timestamp_us: u64, channels: Vec<f32>) -> Self {
        Self {
            stream_id,
            timestamp_us,
            channels,
        }
    }
}

/// A fixed-length channel × sample matrix cut from one participant's stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochWindow {
    pub participant: Participant,
    pub start_timestamp_us: u64,
    pub sample_rate: f64,
    /// `data[channel][sample]`
    pub data: Vec<Vec<f64>>,
}

impl EpochWindow {
    pub fn channel_count(&self) -> usize {
        self.data.len()
    }

    pub fn sample_count(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    /// Timestamp one sample period past the last sample.
    pub fn end_timestamp_us(&self) -> u64 {
        self.start_timestamp_us
            + libm_round(self.sample_count() as f64 * crate::MICROS_PER_SECOND / self.sample_rate)
    }
}

fn libm_round(x: f64) -> u64 {
    #[allow(unused_imports)]
    use num_traits::Float;
    x.round() as u64
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("invalid filter: {0}")]
    InvalidFilter(&'static str),
    #[error("signal too short: {len} samples, need at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("phase undefined for an all-zero signal")]
    UndefinedPhase,
    #[error("invalid window configuration: {0}")]
    InvalidWindow(&'static str),
    #[error("expected {expected} channels, frame has {found}")]
    ChannelCount { expected: usize, found: usize },
    #[error("timestamp {timestamp_us} does not follow {previous_us}")]
    NonMonotonic { previous_us: u64, timestamp_us: u64 },
    #[error("non-finite sample value")]
    NonFinite,
}
