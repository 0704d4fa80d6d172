//! Per-participant sample buffers cut on a shared hop grid.
//!
//! Window `k` nominally starts at `origin + k·hop`. A participant's window is
//! the `window_len` consecutive samples beginning within half a sample
//! period of that instant; any gap inside them breaks the window. Cutting
//! both participants on the same grid keeps them paired after a gap instead
//! of drifting onto different hop phases.

use std::collections::VecDeque;

use neuresonance_core::motion::MotionSample;
use neuresonance_core::{EpochWindow, Participant, SampleFrame, SignalError};

#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Ready(EpochWindow),
    /// Not enough data yet.
    Pending,
    /// The window can never be completed.
    Broken(&'static str),
}

#[derive(Debug, Clone)]
pub struct EegBuffer {
    participant: Participant,
    channel_count: usize,
    sample_rate: f64,
    period_us: f64,
    samples: VecDeque<(u64, Vec<f32>)>,
    last_us: Option<u64>,
}

impl EegBuffer {
    pub fn new(participant: Participant, channel_count: usize, sample_rate: f64) -> Self {
        Self {
            participant,
            channel_count,
            sample_rate,
            period_us: 1e6 / sample_rate,
            samples: VecDeque::new(),
            last_us: None,
        }
    }

    pub fn last_us(&self) -> Option<u64> {
        self.last_us
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, frame: &SampleFrame) -> Result<(), SignalError> {
        if frame.channels.len() != self.channel_count {
            return Err(SignalError::ChannelCount {
                expected: self.channel_count,
                found: frame.channels.len(),
            });
        }
        if frame.channels.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite);
        }
        if let Some(previous) = self.last_us {
            if frame.timestamp_us <= previous {
                return Err(SignalError::NonMonotonic {
                    previous_us: previous,
                    timestamp_us: frame.timestamp_us,
                });
            }
        }
        self.last_us = Some(frame.timestamp_us);
        self.samples.push_back((frame.timestamp_us, frame.channels.clone()));
        Ok(())
    }

    /// Window of `len` samples nominally starting at `start_us`.
    pub fn window_at(&self, start_us: u64, len: usize) -> Lookup {
        let half = self.period_us / 2.0;
        let last_expected = start_us as f64 + (len - 1) as f64 * self.period_us;
        let Some(last) = self.last_us else {
            return Lookup::Pending;
        };
        if (last as f64) < last_expected - half {
            // Data so far could still fill the window, unless the samples that
            // should open it were skipped.
            return match self.samples.front() {
                Some(&(first, _)) if first as f64 > start_us as f64 + half => {
                    Lookup::Broken("samples missing at window start")
                }
                _ => Lookup::Pending,
            };
        }
        let i = self
            .samples
            .partition_point(|(t, _)| (*t as f64) < start_us as f64 - half);
        match self.samples.get(i) {
            Some(&(t, _)) if (t as f64) <= start_us as f64 + half => {}
            _ => return Lookup::Broken("samples missing at window start"),
        }
        if i + len > self.samples.len() {
            return Lookup::Broken("samples missing inside window");
        }
        let limit = 1.5 * self.period_us;
        let contiguous = self
            .samples
            .range(i..i + len)
            .zip(self.samples.range(i + 1..i + len))
            .all(|(a, b)| ((b.0 - a.0) as f64) <= limit);
        if !contiguous {
            return Lookup::Broken("gap inside window");
        }
        let mut data: Vec<Vec<f64>> = (0..self.channel_count).map(|_| Vec::with_capacity(len)).collect();
        for (_, sample) in self.samples.range(i..i + len) {
            for (channel, &v) in data.iter_mut().zip(sample) {
                channel.push(f64::from(v));
            }
        }
        Lookup::Ready(EpochWindow {
            participant: self.participant,
            start_timestamp_us: self.samples[i].0,
            sample_rate: self.sample_rate,
            data,
        })
    }

    /// Drops samples older than `before_us`.
    pub fn discard_before(&mut self, before_us: u64) {
        while self.samples.front().is_some_and(|(t, _)| *t < before_us) {
            self.samples.pop_front();
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MotionBuffer {
    samples: Vec<MotionSample>,
    last_us: Option<u64>,
}

impl MotionBuffer {
    pub fn push(&mut self, sample: MotionSample) -> bool {
        if self.last_us.is_some_and(|t| sample.timestamp_us <= t) {
            return false;
        }
        if !sample.position.iter().chain(&sample.orientation).all(|v| v.is_finite()) {
            return false;
        }
        self.last_us = Some(sample.timestamp_us);
        self.samples.push(sample);
        true
    }

    pub fn last_us(&self) -> Option<u64> {
        self.last_us
    }

    pub fn samples(&self) -> &[MotionSample] {
        &self.samples
    }

    pub fn discard_before(&mut self, before_us: u64) {
        let keep_from = self.samples.partition_point(|s| s.timestamp_us < before_us);
        self.samples.drain(..keep_from);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buffer_with(indices: impl IntoIterator<Item = u64>) -> EegBuffer {
        let mut b = EegBuffer::new(Participant::A, 1, 256.0);
        for n in indices {
            let ts = n * 1_000_000 / 256;
            b.push(&SampleFrame::new(0, ts, vec![n as f32])).unwrap();
        }
        b
    }

    #[test]
    fn cuts_on_grid() {
        let b = buffer_with(0..1535);
        let Lookup::Ready(w) = b.window_at(1_500_000, 768) else {
            panic!()
        };
        assert_eq!(w.data[0][0], 384.0);
        assert_eq!(w.sample_count(), 768);
        assert_eq!(b.window_at(3_000_000, 768), Lookup::Pending);
    }

    #[test]
    fn gap_breaks_only_overlapping_windows() {
        let b = buffer_with((0..3000).filter(|&n| n != 500));
        assert!(matches!(b.window_at(0, 768), Lookup::Broken(_)));
        assert!(matches!(b.window_at(1_500_000, 768), Lookup::Broken(_)));
        assert!(matches!(b.window_at(3_000_000, 768), Lookup::Ready(_)));
    }

    #[test]
    fn late_start_is_broken() {
        let b = buffer_with(100..200);
        assert!(matches!(b.window_at(0, 768), Lookup::Broken(_)));
    }
}
