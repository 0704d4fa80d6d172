//! Head-motion artifact gating.
//!
//! Linear speed comes from central differences of marker position; angular
//! speed is the geodesic angle between the orientations either side of a
//! sample divided by the elapsed time. A segment is rejected when any speed
//! is strictly above its threshold, and a rejected epoch carries the last
//! valid metric forward for at most [`MAX_HOLD`] epochs.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::metric::IbsMetric;
use crate::signal::Participant;

/// Consecutive held epochs allowed before the output goes invalid.
pub const MAX_HOLD: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MotionError {
    #[error("need at least 3 motion samples, got {0}")]
    TooFewSamples(usize),
    #[error("motion timestamps not strictly increasing at index {0}")]
    NonMonotonic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub participant: Participant,
    pub timestamp_us: u64,
    /// Millimetres.
    pub position: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
}

impl MotionSample {
    /// Builds a sample from the seven wire channels `x y z qw qx qy qz`.
    pub fn from_channels(participant: Participant, timestamp_us: u64, ch: &[f32]) -> Option<Self> {
        if ch.len() != 7 {
            return None;
        }
        let v = |i: usize| ch[i] as f64;
        Some(Self {
            participant,
            timestamp_us,
            position: [v(0), v(1), v(2)],
            orientation: [v(3), v(4), v(5), v(6)],
        })
    }

    pub fn to_channels(&self) -> [f32; 7] {
        let [x, y, z] = self.position;
        let [w, qx, qy, qz] = self.orientation;
        [x, y, z, w, qx, qy, qz].map(|v| v as f32)
    }
}

/// Speeds at one interior sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub timestamp_us: u64,
    pub linear_mm_s: f64,
    pub angular_rad_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MotionThresholds {
    pub linear_mm_s: f64,
    pub angular_rad_s: f64,
}

impl Default for MotionThresholds {
    fn default() -> Self {
        Self {
            linear_mm_s: 200.0,
            angular_rad_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MotionVerdict {
    pub segment_start_us: u64,
    pub segment_end_us: u64,
    pub linear_peak: f64,
    pub angular_peak: f64,
    pub rejected: bool,
    /// Set when the segment had no velocity samples and was accepted by default.
    pub empty: bool,
}

impl MotionVerdict {
    pub fn accepted(segment_start_us: u64, segment_end_us: u64) -> Self {
        Self {
            segment_start_us,
            segment_end_us,
            linear_peak: 0.0,
            angular_peak: 0.0,
            rejected: false,
            empty: false,
        }
    }
}

fn normalize(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        q.map(|v| v / n)
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// Rotation angle taking `from` to `to`, in `[0, π]`.
pub fn geodesic_angle(from: [f64; 4], to: [f64; 4]) -> f64 {
    let [w1, x1, y1, z1] = normalize(from);
    let [w2, x2, y2, z2] = normalize(to);
    // conj(from) * to
    let w = w1 * w2 + x1 * x2 + y1 * y2 + z1 * z2;
    let x = w1 * x2 - x1 * w2 - y1 * z2 + z1 * y2;
    let y = w1 * y2 + x1 * z2 - y1 * w2 - z1 * x2;
    let z = w1 * z2 - x1 * y2 + y1 * x2 - z1 * w2;
    let vector = (x * x + y * y + z * z).sqrt();
    2.0 * vector.atan2(w.abs())
}

/// Central-difference speeds, one per interior sample.
pub fn estimate_velocities(samples: &[MotionSample]) -> Result<Vec<Velocity>, MotionError> {
    if samples.len() < 3 {
        return Err(MotionError::TooFewSamples(samples.len()));
    }
    if let Some(i) = samples
        .windows(2)
        .position(|w| w[1].timestamp_us <= w[0].timestamp_us)
    {
        return Err(MotionError::NonMonotonic(i + 1));
    }
    Ok(samples
        .windows(3)
        .map(|w| {
            let (prev, mid, next) = (&w[0], &w[1], &w[2]);
            let dt = (next.timestamp_us - prev.timestamp_us) as f64 / 1e6;
            let distance = prev
                .position
                .iter()
                .zip(&next.position)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt();
            Velocity {
                timestamp_us: mid.timestamp_us,
                linear_mm_s: distance / dt,
                angular_rad_s: geodesic_angle(prev.orientation, next.orientation) / dt,
            }
        })
        .collect())
}

/// Rejects when any speed is strictly above its threshold.
pub fn classify_segment(velocities: &[Velocity], thresholds: MotionThresholds) -> MotionVerdict {
    let (Some(first), Some(last)) = (velocities.first(), velocities.last()) else {
        return MotionVerdict {
            empty: true,
            ..MotionVerdict::accepted(0, 0)
        };
    };
    let linear_peak = velocities.iter().map(|v| v.linear_mm_s).fold(0.0, f64::max);
    let angular_peak = velocities.iter().map(|v| v.angular_rad_s).fold(0.0, f64::max);
    MotionVerdict {
        segment_start_us: first.timestamp_us,
        segment_end_us: last.timestamp_us,
        linear_peak,
        angular_peak,
        rejected: linear_peak > thresholds.linear_mm_s || angular_peak > thresholds.angular_rad_s,
        empty: false,
    }
}

/// Verdict for the span `[start_us, end_us)` of an EEG epoch.
///
/// `samples` must be time-ordered. Samples up to one motion period outside
/// the span are used so that the central differences cover its edges.
pub fn classify_span(
    samples: &[MotionSample],
    start_us: u64,
    end_us: u64,
    period_us: u64,
    thresholds: MotionThresholds,
) -> MotionVerdict {
    let lo = start_us.saturating_sub(period_us);
    let hi = end_us.saturating_add(period_us);
    let first = samples.partition_point(|s| s.timestamp_us < lo);
    let last = samples.partition_point(|s| s.timestamp_us <= hi);
    let segment = &samples[first..last];
    let mut verdict = match estimate_velocities(segment) {
        Ok(velocities) => classify_segment(&velocities, thresholds),
        Err(_) => classify_segment(&[], thresholds),
    };
    verdict.segment_start_us = start_us;
    verdict.segment_end_us = end_us;
    verdict
}

/// Stateless hold rule: pass through when neither participant moved,
/// otherwise carry `last_valid` forward (or go invalid without history).
pub fn gate(
    metric: IbsMetric,
    verdict_a: &MotionVerdict,
    verdict_b: &MotionVerdict,
    last_valid: Option<&IbsMetric>,
) -> IbsMetric {
    let metric = if metric.valid && !metric.value.is_finite() {
        IbsMetric::invalid(metric.epoch_start_us)
    } else {
        metric
    };
    if !(verdict_a.rejected || verdict_b.rejected) {
        return metric;
    }
    match last_valid {
        Some(previous) if previous.valid && previous.value.is_finite() => IbsMetric {
            value: previous.value,
            epoch_start_us: metric.epoch_start_us,
            valid: true,
            held: true,
        },
        _ => IbsMetric::invalid(metric.epoch_start_us),
    }
}

/// [`gate`] plus the last-valid memory and the staleness cap.
#[derive(Debug, Clone)]
pub struct MotionGate {
    last_valid: Option<IbsMetric>,
    consecutive_holds: usize,
    max_hold: usize,
}

impl Default for MotionGate {
    fn default() -> Self {
        Self::new(MAX_HOLD)
    }
}

impl MotionGate {
    pub fn new(max_hold: usize) -> Self {
        Self {
            last_valid: None,
            consecutive_holds: 0,
            max_hold,
        }
    }

    pub fn last_valid(&self) -> Option<&IbsMetric> {
        self.last_valid.as_ref()
    }

    pub fn consecutive_holds(&self) -> usize {
        self.consecutive_holds
    }

    pub fn apply(
        &mut self,
        metric: IbsMetric,
        verdict_a: &MotionVerdict,
        verdict_b: &MotionVerdict,
    ) -> IbsMetric {
        let out = gate(metric, verdict_a, verdict_b, self.last_valid.as_ref());
        if out.held {
            self.consecutive_holds += 1;
            if self.consecutive_holds > self.max_hold {
                return IbsMetric::invalid(out.epoch_start_us);
            }
            return out;
        }
        self.consecutive_holds = 0;
        if out.valid {
            self.last_valid = Some(out);
        }
        out
    }
}
