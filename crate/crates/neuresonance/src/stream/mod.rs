//! Wire framing, recordings, replay, the synthetic source and the mock
//! haptic device.

pub mod mock_haptic;
pub mod recording;
pub mod replay;
pub mod synth;
pub mod wire;

use neuresonance_core::Participant;
use serde::{Deserialize, Serialize};

use recording::{StreamInfo, StreamKind};

pub const EEG_CHANNELS: u8 = 14;
pub const MOTION_CHANNELS: u8 = 7;

/// Stream ids of the four session streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamIds {
    pub eeg_a: u8,
    pub eeg_b: u8,
    pub motion_a: u8,
    pub motion_b: u8,
}

impl Default for StreamIds {
    fn default() -> Self {
        Self {
            eeg_a: 0,
            eeg_b: 1,
            motion_a: 2,
            motion_b: 3,
        }
    }
}

impl StreamIds {
    pub fn eeg(&self, p: Participant) -> u8 {
        match p {
            Participant::A => self.eeg_a,
            Participant::B => self.eeg_b,
        }
    }

    pub fn motion(&self, p: Participant) -> u8 {
        match p {
            Participant::A => self.motion_a,
            Participant::B => self.motion_b,
        }
    }

    /// Which stream an id refers to.
    pub fn classify(&self, stream_id: u8) -> Option<(StreamKind, Participant)> {
        [
            (self.eeg_a, StreamKind::Eeg, Participant::A),
            (self.eeg_b, StreamKind::Eeg, Participant::B),
            (self.motion_a, StreamKind::Motion, Participant::A),
            (self.motion_b, StreamKind::Motion, Participant::B),
        ]
        .into_iter()
        .find(|(id, _, _)| *id == stream_id)
        .map(|(_, k, p)| (k, p))
    }

    pub fn layout(&self, eeg_channels: u8) -> wire::StreamLayout {
        wire::StreamLayout::new()
            .with_stream(self.eeg_a, eeg_channels)
            .with_stream(self.eeg_b, eeg_channels)
            .with_stream(self.motion_a, MOTION_CHANNELS)
            .with_stream(self.motion_b, MOTION_CHANNELS)
    }
}

pub fn default_streams(
    ids: &StreamIds,
    eeg_channels: usize,
    eeg_rate: f64,
    motion_rate: f64,
) -> Vec<StreamInfo> {
    let mut streams = Vec::with_capacity(4);
    for p in [Participant::A, Participant::B] {
        streams.push(StreamInfo {
            stream_id: ids.eeg(p),
            kind: StreamKind::Eeg,
            participant: p,
            channel_count: eeg_channels as u8,
            sample_rate: eeg_rate,
        });
    }
    for p in [Participant::A, Participant::B] {
        streams.push(StreamInfo {
            stream_id: ids.motion(p),
            kind: StreamKind::Motion,
            participant: p,
            channel_count: MOTION_CHANNELS,
            sample_rate: motion_rate,
        });
    }
    streams
}
