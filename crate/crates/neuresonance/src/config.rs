//! Engine configuration, loadable from TOML. Every field has a default, so
//! an empty file is a valid configuration.

use std::path::Path;

use neuresonance_core::feedback::{AudioPreset, BinEdges, HapticTable, VisualConfig};
use neuresonance_core::metric::{CcorrForm, IbsConfig, PhaseBand, DEFAULT_EDGE_TRIM, DEFAULT_TOP_K};
use neuresonance_core::motion::MAX_HOLD;
use neuresonance_core::{FilterMode, FilterSpec, MotionThresholds};
use serde::{Deserialize, Serialize};

use crate::session::Modality;
use crate::stream::StreamIds;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub low_cut: f64,
    pub high_cut: f64,
    pub order: usize,
    pub mode: FilterMode,
}

impl Default for FilterSettings {
    fn default() -> Self {
        let spec = FilterSpec::realtime();
        Self {
            low_cut: spec.low_cut,
            high_cut: spec.high_cut,
            order: spec.order,
            mode: spec.mode,
        }
    }
}

impl FilterSettings {
    pub fn spec(&self) -> FilterSpec {
        FilterSpec {
            low_cut: self.low_cut,
            high_cut: self.high_cut,
            order: self.order,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSettings {
    pub enabled: bool,
    pub linear_mm_s: f64,
    pub angular_rad_s: f64,
    pub max_hold: usize,
    pub sample_rate: f64,
}

impl Default for MotionSettings {
    fn default() -> Self {
        let t = MotionThresholds::default();
        Self {
            enabled: true,
            linear_mm_s: t.linear_mm_s,
            angular_rad_s: t.angular_rad_s,
            max_hold: MAX_HOLD,
            sample_rate: 100.0,
        }
    }
}

impl MotionSettings {
    pub fn thresholds(&self) -> MotionThresholds {
        MotionThresholds {
            linear_mm_s: self.linear_mm_s,
            angular_rad_s: self.angular_rad_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualSettings {
    pub base_radius: f64,
    pub max_amplitude: f64,
    pub spike_count: u32,
}

impl Default for VisualSettings {
    fn default() -> Self {
        let v = VisualConfig::default();
        Self {
            base_radius: v.base_radius,
            max_amplitude: v.max_amplitude,
            spike_count: v.spike_count,
        }
    }
}

impl VisualSettings {
    pub fn config(&self) -> VisualConfig {
        VisualConfig {
            base_radius: self.base_radius,
            max_amplitude: self.max_amplitude,
            spike_count: self.spike_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticSettings {
    /// `[bpm, intensity]` for levels 1 to 5.
    pub table: [[u32; 2]; 5],
    pub pulse_ms: u32,
    pub timeout_ms: u64,
}

impl Default for HapticSettings {
    fn default() -> Self {
        let t = HapticTable::default();
        Self {
            table: t.rows.map(|(bpm, intensity)| [bpm, intensity]),
            pulse_ms: t.pulse_ms,
            timeout_ms: 250,
        }
    }
}

impl HapticSettings {
    pub fn table(&self) -> HapticTable {
        HapticTable {
            rows: self.table.map(|[bpm, intensity]| (bpm, intensity)),
            pulse_ms: self.pulse_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    /// UDP `host:port` receiving OSC messages.
    pub osc: Option<String>,
    /// Base URL of the haptic device, e.g. `http://127.0.0.1:8081`.
    pub haptic: Option<String>,
    /// TCP `host:port` for the control/console channel.
    pub control: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub tick_ms: u64,
    pub sample_rate: f64,
    pub channel_count: usize,
    pub filter: FilterSettings,
    pub phase_band: PhaseBand,
    pub top_k: usize,
    pub edge_trim: usize,
    pub ccorr_form: CcorrForm,
    pub bin_edges: [f64; 4],
    /// Forces a modality regardless of condition; unset follows the condition.
    pub modality: Option<Modality>,
    pub audio_preset: AudioPreset,
    pub visual: VisualSettings,
    pub haptic: HapticSettings,
    pub motion: MotionSettings,
    pub endpoints: Endpoints,
    pub budget_ms: f64,
    /// Per-stream ingest buffer, seconds; older frames are dropped first.
    pub queue_s: f64,
    pub streams: StreamIds,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window_s: 3.0,
            hop_s: 1.5,
            tick_ms: 100,
            sample_rate: 256.0,
            channel_count: 14,
            filter: FilterSettings::default(),
            phase_band: PhaseBand::Broadband,
            top_k: DEFAULT_TOP_K,
            edge_trim: DEFAULT_EDGE_TRIM,
            ccorr_form: CcorrForm::Standard,
            bin_edges: BinEdges::default().edges(),
            modality: None,
            audio_preset: AudioPreset::Linear,
            visual: VisualSettings::default(),
            haptic: HapticSettings::default(),
            motion: MotionSettings::default(),
            endpoints: Endpoints::default(),
            budget_ms: 60.0,
            queue_s: 5.0,
            streams: StreamIds::default(),
        }
    }
}

impl EngineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn window_len(&self) -> usize {
        (self.window_s * self.sample_rate).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_s * self.sample_rate).round() as usize
    }

    pub fn ibs_config(&self) -> IbsConfig {
        IbsConfig {
            filter: self.filter.spec(),
            band: self.phase_band,
            top_k: self.top_k,
            edge_trim: self.edge_trim,
            form: self.ccorr_form,
        }
    }

    pub fn bin_edges(&self) -> BinEdges {
        BinEdges::new(self.bin_edges).expect("validated edges")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if !(self.window_s.is_finite() && self.hop_s.is_finite() && self.hop_s > 0.0) {
            return bad("window_s and hop_s must be positive");
        }
        if self.hop_s > self.window_s {
            return bad("hop_s must not exceed window_s");
        }
        if self.tick_ms == 0 || self.tick_ms as f64 > self.hop_s * 1000.0 {
            return bad("tick_ms must be positive and at most hop_s·1000");
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad("sample_rate must be positive");
        }
        if self.channel_count == 0 || self.channel_count > 255 {
            return bad("channel_count must be in 1..=255");
        }
        if let Err(e) = self.filter.spec().validate(self.sample_rate) {
            return Err(ConfigError::Invalid(e.to_string()));
        }
        if BinEdges::new(self.bin_edges).is_err() {
            return bad("bin_edges must be strictly ascending inside (0, 1)");
        }
        if !self.haptic.table().is_monotone() {
            return bad("haptic table must fall strictly in bpm and intensity as the level rises");
        }
        if self.top_k == 0 || self.top_k > self.channel_count {
            return bad("top_k must be in 1..=channel_count");
        }
        if self.window_len() < 2 * self.edge_trim + neuresonance_core::signal::MIN_PHASE_SAMPLES {
            return bad("window too short for the edge trim");
        }
        if !(self.motion.sample_rate.is_finite() && self.motion.sample_rate > 0.0) {
            return bad("motion.sample_rate must be positive");
        }
        if !(self.queue_s.is_finite() && self.queue_s >= self.window_s) {
            return bad("queue_s must hold at least one window");
        }
        let ids = self.streams;
        let mut all = [ids.eeg_a, ids.eeg_b, ids.motion_a, ids.motion_b];
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return bad("stream ids must be distinct");
        }
        if !(self.budget_ms.is_finite() && self.budget_ms > 0.0) {
            return bad("budget_ms must be positive");
        }
        Ok(())
    }

    /// Offline counterpart: same settings with the zero-phase filter.
    pub fn offline_filter(&self) -> FilterSpec {
        FilterSpec {
            mode: FilterMode::ZeroPhase,
            ..self.filter.spec()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        let c: EngineConfig = toml::from_str("").unwrap();
        assert_eq!(c, EngineConfig::default());
        c.validate().unwrap();
        assert_eq!((c.window_len(), c.hop_len()), (768, 384));
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let c = EngineConfig::default();
        let back: EngineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let c: EngineConfig = toml::from_str(
            "hop_s = 1.0\nmodality = \"haptic\"\n[filter]\nmode = \"zero_phase\"\n[endpoints]\nosc = \"127.0.0.1:9000\"\n",
        )
        .unwrap();
        assert_eq!(c.hop_s, 1.0);
        assert_eq!(c.modality, Some(Modality::Haptic));
        assert_eq!(c.filter.mode, FilterMode::ZeroPhase);
        assert!(toml::from_str::<EngineConfig>("window = 3").is_err());
    }

    #[test]
    fn validation() {
        let check = |f: fn(&mut EngineConfig)| {
            let mut c = EngineConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(check(|c| c.hop_s = 4.0).is_err());
        assert!(check(|c| c.tick_ms = 2000).is_err());
        assert!(check(|c| c.bin_edges = [0.2, 0.1, 0.6, 0.8]).is_err());
        assert!(check(|c| c.filter.high_cut = 200.0).is_err());
        assert!(check(|c| c.haptic.table[0] = [10, 100]).is_err());
        assert!(check(|c| c.streams.motion_b = 0).is_err());
        assert!(check(|_| {}).is_ok());
    }
}
