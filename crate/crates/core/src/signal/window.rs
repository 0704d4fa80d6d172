//! Sliding-window epoching of a single stream.
//!
//! Windows start at `t0, t0 + hop, t0 + 2·hop, …` where `t0` is the first
//! sample of a contiguous run. A missing sample (timestamp step larger than
//! 1.5 sample periods) discards the partial buffer so no window ever spans a
//! gap; emission restarts from the first sample after it.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use super::{EpochWindow, Participant, SampleFrame, SignalError};
use crate::MICROS_PER_SECOND;

/// A discontinuity between two consecutive accepted samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub last_before_us: u64,
    pub first_after_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PushOutcome {
    pub window: Option<EpochWindow>,
    pub gap: Option<Gap>,
}

/// Incremental windower for one participant's EEG stream.
#[derive(Debug, Clone)]
pub struct StreamWindower {
    participant: Participant,
    channel_count: usize,
    sample_rate: f64,
    window_len: usize,
    hop_len: usize,
    period_us: f64,
    buffer: VecDeque<(u64, Vec<f32>)>,
    last_timestamp_us: Option<u64>,
}

impl StreamWindower {
    pub fn new(
        participant: Participant,
        channel_count: usize,
        sample_rate: f64,
        window_s: f64,
        hop_s: f64,
    ) -> Result<Self, SignalError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SignalError::InvalidWindow("sample rate must be positive"));
        }
        if channel_count == 0 {
            return Err(SignalError::InvalidWindow("channel count must be positive"));
        }
        let window_len = (window_s * sample_rate).round();
        let hop_len = (hop_s * sample_rate).round();
        if !(window_len >= 1.0 && hop_len >= 1.0) {
            return Err(SignalError::InvalidWindow("window and hop must span at least one sample"));
        }
        if hop_len > window_len {
            return Err(SignalError::InvalidWindow("hop must not exceed window"));
        }
        Ok(Self {
            participant,
            channel_count,
            sample_rate,
            window_len: window_len as usize,
            hop_len: hop_len as usize,
            period_us: MICROS_PER_SECOND / sample_rate,
            buffer: VecDeque::with_capacity(window_len as usize),
            last_timestamp_us: None,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop_len(&self) -> usize {
        self.hop_len
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn participant(&self) -> Participant {
        self.participant
    }

    /// Timestamp of the newest accepted sample.
    pub fn last_timestamp_us(&self) -> Option<u64> {
        self.last_timestamp_us
    }

    /// Drops buffered samples; the next sample starts a fresh run.
    pub fn reset(&mut self) {
        self.buffer.clear();
        self.last_timestamp_us = None;
    }

    /// Accepts one sample. Rejected frames leave the windower untouched.
    pub fn push(&mut self, frame: &SampleFrame) -> Result<PushOutcome, SignalError> {
        if frame.channels.len() != self.channel_count {
            return Err(SignalError::ChannelCount {
                expected: self.channel_count,
                found: frame.channels.len(),
            });
        }
        if frame.channels.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite);
        }
        let mut outcome = PushOutcome::default();
        if let Some(previous) = self.last_timestamp_us {
            if frame.timestamp_us <= previous {
                return Err(SignalError::NonMonotonic {
                    previous_us: previous,
                    timestamp_us: frame.timestamp_us,
                });
            }
            if (frame.timestamp_us - previous) as f64 > 1.5 * self.period_us {
                self.buffer.clear();
                outcome.gap = Some(Gap {
                    last_before_us: previous,
                    first_after_us: frame.timestamp_us,
                });
            }
        }
        self.last_timestamp_us = Some(frame.timestamp_us);
        self.buffer.push_back((frame.timestamp_us, frame.channels.clone()));

        if self.buffer.len() == self.window_len {
            outcome.window = Some(self.cut());
            self.buffer.drain(..self.hop_len);
        }
        Ok(outcome)
    }

    fn cut(&self) -> EpochWindow {
        let mut data: Vec<Vec<f64>> = (0..self.channel_count)
            .map(|_| Vec::with_capacity(self.window_len))
            .collect();
        for (_, sample) in &self.buffer {
            for (channel, &value) in data.iter_mut().zip(sample) {
                channel.push(value as f64);
            }
        }
        EpochWindow {
            participant: self.participant,
            start_timestamp_us: self.buffer[0].0,
            sample_rate: self.sample_rate,
            data,
        }
    }
}

/// Batch result of [`slide_windows`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Windowing {
    pub windows: Vec<EpochWindow>,
    pub gaps: Vec<Gap>,
}

/// Cuts every complete window out of a stored stream.
///
/// Gaps do not abort: they are reported and windowing resumes after them.
/// Frames with the wrong channel count or out-of-order timestamps are errors.
pub fn slide_windows(
    frames: &[SampleFrame],
    participant: Participant,
    channel_count: usize,
    sample_rate: f64,
    window_s: f64,
    hop_s: f64,
) -> Result<Windowing, SignalError> {
    let mut windower =
        StreamWindower::new(participant, channel_count, sample_rate, window_s, hop_s)?;
    let mut result = Windowing::default();
    for frame in frames {
        let outcome = windower.push(frame)?;
        result.gaps.extend(outcome.gap);
        result.windows.extend(outcome.window);
    }
    Ok(result)
}
