//! Five-level quantization of the synchrony metric and the three feedback
//! modality mappings.

mod osc;

pub use osc::{decode_osc, encode_osc, OscDecodeError, OSC_ADDRESS};

use crate::metric::IbsMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("bin edges must be strictly ascending inside (0, 1)")]
    MalformedEdges,
    #[error("feedback level {0} outside 1..=5")]
    LevelOutOfRange(u8),
}

/// Synchrony level, 1 (lowest) to 5 (highest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FeedbackLevel(u8);

impl FeedbackLevel {
    pub const LOWEST: FeedbackLevel = FeedbackLevel(1);
    pub const NEUTRAL: FeedbackLevel = FeedbackLevel(3);
    pub const HIGHEST: FeedbackLevel = FeedbackLevel(5);

    pub fn new(level: u8) -> Result<Self, FeedbackError> {
        if (1..=5).contains(&level) {
            Ok(Self(level))
        } else {
            Err(FeedbackError::LevelOutOfRange(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = FeedbackLevel> {
        (1..=5).map(FeedbackLevel)
    }

    fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

/// Four ascending edges splitting the clamped `[0, 1]` metric into five
/// left-closed bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEdges([f64; 4]);

impl BinEdges {
    pub fn new(edges: [f64; 4]) -> Result<Self, FeedbackError> {
        let inside = edges.iter().all(|&e| e > 0.0 && e < 1.0);
        let ascending = edges.windows(2).all(|w| w[0] < w[1]);
        if inside && ascending {
            Ok(Self(edges))
        } else {
            Err(FeedbackError::MalformedEdges)
        }
    }

    pub fn edges(&self) -> [f64; 4] {
        self.0
    }
}

impl Default for BinEdges {
    fn default() -> Self {
        Self([0.2, 0.4, 0.6, 0.8])
    }
}

/// Level for a metric; invalid metrics map to the neutral level 3.
pub fn quantize_level(metric: &IbsMetric, edges: &BinEdges) -> FeedbackLevel {
    if !metric.valid || !metric.value.is_finite() {
        return FeedbackLevel::NEUTRAL;
    }
    let value = metric.value.clamp(0.0, 1.0);
    let above = edges.0.iter().filter(|&&edge| value >= edge).count();
    FeedbackLevel(above as u8 + 1)
}

/// Ring colour; the ring is always drawn in orange.
pub const RING_COLOR: &str = "#FF8C00";

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RingSpec {
    pub base_radius: f64,
    /// Fraction of the base radius; 0 draws a still circle.
    pub wave_amplitude: f64,
    pub spike_count: u32,
    pub color: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualConfig {
    pub base_radius: f64,
    pub max_amplitude: f64,
    pub spike_count: u32,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self {
            base_radius: 0.5,
            max_amplitude: 0.25,
            spike_count: 24,
        }
    }
}

/// Oscillation shrinks linearly with the level and vanishes at level 5.
pub fn map_visual(level: FeedbackLevel, config: &VisualConfig) -> RingSpec {
    let steps_below_top = f64::from(5 - level.get());
    RingSpec {
        base_radius: config.base_radius,
        wave_amplitude: config.max_amplitude * steps_below_top / 4.0,
        spike_count: config.spike_count,
        color: RING_COLOR,
    }
}

/// Highest middle-note frequency: the just major third.
pub const MAJOR_THIRD_HZ: f64 = 659.0;
pub const ROOT_HZ: f64 = MAJOR_THIRD_HZ * 4.0 / 5.0;
pub const FIFTH_HZ: f64 = MAJOR_THIRD_HZ * 6.0 / 5.0;

/// How the middle note drops below the major third as synchrony falls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AudioPreset {
    /// 547, 575, 603, 631, 659 Hz for levels 1..5.
    #[default]
    Linear,
    /// 5 % multiplicative steps down from 659 Hz per level below 5.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChordSpec {
    pub root_hz: f64,
    pub middle_hz: f64,
    pub fifth_hz: f64,
}

const LINEAR_MIDDLE_HZ: [f64; 5] = [547.0, 575.0, 603.0, 631.0, 659.0];

/// Root and fifth stay fixed at 4:6 of the major third; only the middle
/// note moves.
pub fn map_audio(level: FeedbackLevel, preset: AudioPreset) -> ChordSpec {
    let middle_hz = match preset {
        AudioPreset::Linear => LINEAR_MIDDLE_HZ[level.index()],
        AudioPreset::Geometric => {
            let mut f = MAJOR_THIRD_HZ;
            for _ in level.get()..5 {
                f *= 0.95;
            }
            f
        }
    };
    ChordSpec {
        root_hz: ROOT_HZ,
        middle_hz,
        fifth_hz: FIFTH_HZ,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HapticPattern {
    pub bpm: u32,
    /// Percent of maximum drive.
    pub intensity: u32,
    pub pulse_ms: u32,
}

/// `(bpm, intensity)` for levels 1..5 plus a shared pulse width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HapticTable {
    pub rows: [(u32, u32); 5],
    pub pulse_ms: u32,
}

impl Default for HapticTable {
    fn default() -> Self {
        Self {
            rows: [(180, 100), (150, 80), (120, 60), (80, 40), (50, 20)],
            pulse_ms: 150,
        }
    }
}

impl HapticTable {
    /// Both columns must fall strictly as the level rises; intensity ≤ 100.
    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].0 > w[1].0 && w[0].1 > w[1].1)
            && self.rows.iter().all(|r| r.1 <= 100)
    }
}

pub fn map_haptic(level: FeedbackLevel, table: &HapticTable) -> HapticPattern {
    let (bpm, intensity) = table.rows[level.index()];
    HapticPattern {
        bpm,
        intensity,
        pulse_ms: table.pulse_ms,
    }
}
