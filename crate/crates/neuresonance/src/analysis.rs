//! Post-session analysis of a recording.
//!
//! Each trial is re-epoched on a fine hop, its edge epochs dropped, noisy
//! epochs rejected by a robust threshold on a spectral energy score, and the
//! surviving epochs pooled into one correlation per trial through Fisher's z.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use neuresonance_core::fft::FftPlan;
use neuresonance_core::metric::{CcorrForm, IbsPipeline, PhaseBand};
use neuresonance_core::motion::{classify_span, MotionSample, MotionThresholds};
use neuresonance_core::{fisher_z, inverse_fisher_z, EpochWindow, FilterMode, FilterSpec, IbsMetric, Participant};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::EngineConfig;
use crate::engine::{EegBuffer, Lookup};
use crate::session::Condition;
use crate::stream::recording::{Recording, RecordingError, StreamKind, TrialSpan};

pub const STFT_LEN: usize = 256;
pub const STFT_HOP: usize = 128;
/// Fewer scored epochs than this are all kept, with a note.
pub const MIN_SCORED_EPOCHS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub window_s: f64,
    pub hop_s: f64,
    /// Epochs dropped from each end of a trial.
    pub trim: usize,
    /// Rejection threshold: median + k·MAD.
    pub threshold_k: f64,
    pub filter: FilterSpec,
    pub band: PhaseBand,
    pub top_k: usize,
    pub edge_trim: usize,
    pub form: CcorrForm,
    /// `None` skips the motion check.
    pub motion: Option<MotionThresholds>,
    /// Also pool each narrow band separately.
    pub per_band: bool,
}

impl AnalysisConfig {
    /// Offline settings mirroring an engine configuration, with the
    /// zero-phase filter.
    pub fn from_engine(engine: &EngineConfig) -> Self {
        Self {
            window_s: engine.window_s,
            hop_s: 0.5,
            trim: 3,
            threshold_k: 3.0,
            filter: engine.offline_filter(),
            band: engine.phase_band,
            top_k: engine.top_k,
            edge_trim: engine.edge_trim,
            form: engine.ccorr_form,
            motion: engine.motion.enabled.then(|| engine.motion.thresholds()),
            per_band: false,
        }
    }

    /// Same filter as the live path, for equivalence checks.
    pub fn causal(mut self) -> Self {
        self.filter.mode = FilterMode::Causal;
        self
    }

    fn pipeline(&self, band: PhaseBand, fs: f64) -> Result<IbsPipeline, AnalysisError> {
        let config = neuresonance_core::IbsConfig {
            filter: self.filter,
            band,
            top_k: self.top_k,
            edge_trim: self.edge_trim,
            form: self.form,
        };
        IbsPipeline::new(config, fs, window_len(self.window_s, fs)).map_err(|e| AnalysisError::Config(e.to_string()))
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self::from_engine(&EngineConfig::default())
    }
}

fn window_len(window_s: f64, fs: f64) -> usize {
    (window_s * fs).round() as usize
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error("recording has no {0}")]
    MissingStream(&'static str),
    #[error("invalid analysis settings: {0}")]
    Config(String),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

/// Number of `window_s` epochs at `hop_s` that fit in `duration_s`.
pub fn epoch_count(duration_s: f64, window_s: f64, hop_s: f64) -> usize {
    if duration_s + 1e-9 < window_s {
        return 0;
    }
    ((duration_s - window_s) / hop_s + 1e-9).floor() as usize + 1
}

/// One epoch cut from both participants, or the reason it could not be.
#[derive(Debug, Clone)]
pub struct EpochPair {
    pub index: usize,
    pub start_us: u64,
    pub windows: Result<(EpochWindow, EpochWindow), &'static str>,
}

/// Cuts the epochs of one trial. Epochs never extend past the stop marker.
pub fn epoch_offline(
    recording: &Recording,
    trial: &TrialSpan,
    window_s: f64,
    hop_s: f64,
) -> Result<Vec<EpochPair>, AnalysisError> {
    let (buffers, fs) = eeg_buffers(recording, trial.start_us, trial.stop_us)?;
    let len = window_len(window_s, fs);
    let duration_s = (trial.stop_us - trial.start_us) as f64 / 1e6;
    let count = epoch_count(duration_s, window_s, hop_s);
    Ok((0..count)
        .map(|index| {
            let start_us = trial.start_us + (index as f64 * hop_s * 1e6).round() as u64;
            let cut = |b: &EegBuffer| match b.window_at(start_us, len) {
                Lookup::Ready(w) => Ok(w),
                Lookup::Broken(reason) => Err(reason),
                Lookup::Pending => Err("recording ends inside epoch"),
            };
            let windows = cut(&buffers[0]).and_then(|a| Ok((a, cut(&buffers[1])?)));
            EpochPair {
                index,
                start_us,
                windows,
            }
        })
        .collect())
}

fn eeg_buffers(recording: &Recording, from_us: u64, to_us: u64) -> Result<([EegBuffer; 2], f64), AnalysisError> {
    let manifest = &recording.manifest;
    let a = manifest
        .stream_for(StreamKind::Eeg, Participant::A)
        .ok_or(AnalysisError::MissingStream("EEG stream for participant A"))?;
    let b = manifest
        .stream_for(StreamKind::Eeg, Participant::B)
        .ok_or(AnalysisError::MissingStream("EEG stream for participant B"))?;
    let fs = a.sample_rate;
    let mut buffers = [
        EegBuffer::new(Participant::A, usize::from(a.channel_count), fs),
        EegBuffer::new(Participant::B, usize::from(b.channel_count), b.sample_rate),
    ];
    for frame in &recording.frames {
        if frame.timestamp_us < from_us || frame.timestamp_us >= to_us {
            continue;
        }
        let slot = if frame.stream_id == a.stream_id {
            0
        } else if frame.stream_id == b.stream_id {
            1
        } else {
            continue;
        };
        // Malformed frames stay out, so epochs over them come out broken.
        let _ = buffers[slot].push(frame);
    }
    Ok((buffers, fs))
}

/// Drops `n` items from each end. Returns `true` (and nothing) when no more
/// than `2n` items were given.
pub fn trim_edges<T>(mut items: Vec<T>, n: usize) -> (Vec<T>, bool) {
    if items.len() <= 2 * n {
        items.clear();
        return (items, true);
    }
    items.truncate(items.len() - n);
    items.drain(..n);
    (items, false)
}

/// Spectral centroid and energy of one STFT frame, from one-sided magnitudes.
fn frame_features(magnitudes: &[f64], bin_hz: f64) -> (f64, f64) {
    let total: f64 = magnitudes.iter().sum();
    let energy = magnitudes.iter().map(|m| m * m).sum();
    if total == 0.0 {
        return (0.0, energy);
    }
    let weighted: f64 = magnitudes.iter().enumerate().map(|(k, m)| k as f64 * bin_hz * m).sum();
    (weighted / total, energy)
}

/// Short-time spectra of `signal`: 256-point Hann frames every 128 samples.
/// A signal shorter than one frame is zero-padded into a single frame.
pub struct Stft {
    plan: FftPlan,
    window: Vec<f64>,
}

impl Stft {
    pub fn new() -> Self {
        let window = (0..STFT_LEN)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / STFT_LEN as f64).cos())
            .collect();
        Self {
            plan: FftPlan::new(STFT_LEN),
            window,
        }
    }

    /// One-sided magnitude spectra, bins `0..=128`.
    pub fn magnitudes(&self, signal: &[f64]) -> Vec<Vec<f64>> {
        let starts: Vec<usize> = if signal.len() <= STFT_LEN {
            vec![0]
        } else {
            (0..=(signal.len() - STFT_LEN) / STFT_HOP).map(|i| i * STFT_HOP).collect()
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); STFT_LEN];
        starts
            .into_iter()
            .map(|s| {
                for (i, slot) in buf.iter_mut().enumerate() {
                    let x = signal.get(s + i).copied().unwrap_or(0.0);
                    *slot = Complex64::new(x * self.window[i], 0.0);
                }
                self.plan.forward_in_place(&mut buf);
                buf[..=STFT_LEN / 2].iter().map(|z| z.norm()).collect()
            })
            .collect()
    }

    /// Per-frame spectral centroids (Hz) of `signal` sampled at `fs`.
    pub fn centroids(&self, signal: &[f64], fs: f64) -> Vec<f64> {
        let bin_hz = fs / STFT_LEN as f64;
        self.magnitudes(signal)
            .iter()
            .map(|m| frame_features(m, bin_hz).0)
            .collect()
    }

    /// Mean over frames of centroid × energy.
    pub fn channel_score(&self, signal: &[f64], fs: f64) -> f64 {
        let bin_hz = fs / STFT_LEN as f64;
        let frames = self.magnitudes(signal);
        let sum: f64 = frames
            .iter()
            .map(|m| {
                let (centroid, energy) = frame_features(m, bin_hz);
                centroid * energy
            })
            .sum();
        sum / frames.len() as f64
    }
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

/// Noise score of an epoch: the channel scores of the mean-removed signal,
/// summed over channels. Broadband muscle noise raises both the centroid and
/// the energy.
pub fn spectral_energy_score(epoch: &EpochWindow) -> f64 {
    let stft = Stft::new();
    epoch
        .data
        .iter()
        .map(|channel| {
            let mean = channel.iter().sum::<f64>() / channel.len().max(1) as f64;
            let centred: Vec<f64> = channel.iter().map(|x| x - mean).collect();
            stft.channel_score(&centred, epoch.sample_rate)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochValidity {
    pub index: usize,
    pub score: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub epochs: Vec<EpochValidity>,
    pub median: Option<f64>,
    pub mad: Option<f64>,
    /// Scores above this are rejected; `None` when every epoch was kept.
    pub threshold: Option<f64>,
    pub note: Option<String>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Marks epochs whose score exceeds median + k·MAD (unscaled MAD).
///
/// With fewer than [`MIN_SCORED_EPOCHS`] scores, or a MAD of zero, every
/// finite score is kept. Non-finite scores are always rejected.
pub fn reject_noisy_epochs(scores: &[f64], k: f64) -> Rejection {
    let mut finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let mark = |threshold: Option<f64>| {
        scores
            .iter()
            .enumerate()
            .map(|(index, &score)| EpochValidity {
                index,
                score,
                valid: score.is_finite() && threshold.is_none_or(|t| score <= t),
            })
            .collect()
    };
    if finite.len() < MIN_SCORED_EPOCHS {
        return Rejection {
            epochs: mark(None),
            median: None,
            mad: None,
            threshold: None,
            note: Some(format!(
                "only {} scored epochs; rejection skipped (low confidence)",
                finite.len()
            )),
        };
    }
    let med = median(&finite);
    let mut deviations: Vec<f64> = finite.iter().map(|s| (s - med).abs()).collect();
    deviations.sort_by(f64::total_cmp);
    let mad = median(&deviations);
    let (threshold, note) = if mad == 0.0 {
        (None, Some("median absolute deviation is zero; all epochs kept".to_string()))
    } else {
        (Some(med + k * mad), None)
    };
    Rejection {
        epochs: mark(threshold),
        median: Some(med),
        mad: Some(mad),
        threshold,
        note,
    }
}

/// Valid if at least half of the analyzable epochs are valid.
pub fn trial_is_valid(valid: usize, analyzable: usize) -> bool {
    analyzable > 0 && 2 * valid >= analyzable
}

/// Fisher-z mean of correlations; `None` for an empty list.
pub fn fisher_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let z = values.iter().map(|&r| fisher_z(r)).sum::<f64>() / values.len() as f64;
    Some(inverse_fisher_z(z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub index: usize,
    pub start_us: u64,
    pub score: Option<f64>,
    pub spectral_valid: bool,
    pub motion_valid: bool,
    pub valid: bool,
    /// Pooled metric of this epoch, when it could be computed.
    pub metric: Option<f64>,
    pub note: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandValue {
    pub band: &'static str,
    pub pooled_ccorr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial_id: u32,
    pub condition: Condition,
    pub start_us: u64,
    pub stop_us: u64,
    pub total: usize,
    pub trimmed: usize,
    pub analyzable: usize,
    pub valid: usize,
    pub invalid: usize,
    pub too_short: bool,
    pub trial_valid: bool,
    pub pooled_ccorr: Option<f64>,
    pub median_score: Option<f64>,
    pub mad_score: Option<f64>,
    pub threshold: Option<f64>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_band: Vec<BandValue>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub trials: usize,
    pub valid_trials: usize,
    /// Mean of the valid trials' pooled correlations.
    pub mean_pooled_ccorr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub session_id: String,
    pub settings: AnalysisConfig,
    pub trials: Vec<TrialReport>,
    pub conditions: Vec<ConditionSummary>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// True when there were trials and none of them survived.
    pub fn all_rejected(&self) -> bool {
        !self.trials.is_empty() && self.trials.iter().all(|t| !t.trial_valid)
    }

    pub fn condition(&self, c: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }

    /// Trial rows with a fixed column order.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "trial_id",
            "condition",
            "start_us",
            "stop_us",
            "total",
            "trimmed",
            "analyzable",
            "valid",
            "invalid",
            "too_short",
            "trial_valid",
            "pooled_ccorr",
            "threshold",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        for t in &self.trials {
            w.write_record([
                t.trial_id.to_string(),
                t.condition.label().to_string(),
                t.start_us.to_string(),
                t.stop_us.to_string(),
                t.total.to_string(),
                t.trimmed.to_string(),
                t.analyzable.to_string(),
                t.valid.to_string(),
                t.invalid.to_string(),
                t.too_short.to_string(),
                t.trial_valid.to_string(),
                opt(t.pooled_ccorr),
                opt(t.threshold),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), AnalysisError> {
        let err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AnalysisError::Write { path, source }
        };
        fs::create_dir_all(dir).map_err(err(dir))?;
        let json = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        fs::write(&json, text).map_err(err(&json))?;
        let csv_path = dir.join("report.csv");
        let file = fs::File::create(&csv_path).map_err(err(&csv_path))?;
        self.write_csv(file)
            .map_err(|e| AnalysisError::Write {
                path: csv_path.clone(),
                source: io::Error::other(e),
            })?;
        Ok((json, csv_path))
    }
}

struct MotionStreams {
    samples: [Vec<MotionSample>; 2],
    period_us: u64,
}

impl MotionStreams {
    fn from_recording(recording: &Recording) -> Option<Self> {
        let mut period_us = None;
        let samples = [Participant::A, Participant::B].map(|p| {
            let Some(info) = recording.manifest.stream_for(StreamKind::Motion, p) else {
                return Vec::new();
            };
            period_us = Some((1e6 / info.sample_rate).round() as u64);
            recording
                .stream_frames(info.stream_id)
                .filter_map(|f| MotionSample::from_channels(p, f.timestamp_us, &f.channels))
                .collect()
        });
        Some(Self {
            samples,
            period_us: period_us?,
        })
    }

    /// False if either participant moved past the thresholds.
    fn still(&self, a: &EpochWindow, b: &EpochWindow, thresholds: MotionThresholds) -> bool {
        let end = a.end_timestamp_us().max(b.end_timestamp_us());
        [a, b].iter().zip(&self.samples).all(|(w, s)| {
            !classify_span(s, w.start_timestamp_us, end, self.period_us, thresholds).rejected
        })
    }
}

/// Metric of every complete epoch in the recording's trials, ignoring trim
/// and rejection. Used to compare against the live trace.
pub fn epoch_metrics(recording: &Recording, config: &AnalysisConfig) -> Result<Vec<IbsMetric>, AnalysisError> {
    let (trials, _) = recording.manifest.trials();
    let fs = eeg_rate(recording)?;
    let pipeline = config.pipeline(config.band, fs)?;
    let mut out = Vec::new();
    for trial in &trials {
        for epoch in epoch_offline(recording, trial, config.window_s, config.hop_s)? {
            if let Ok((a, b)) = &epoch.windows {
                if let Ok(m) = pipeline.compute(a, b) {
                    out.push(m);
                }
            }
        }
    }
    Ok(out)
}

fn eeg_rate(recording: &Recording) -> Result<f64, AnalysisError> {
    recording
        .manifest
        .stream_for(StreamKind::Eeg, Participant::A)
        .map(|s| s.sample_rate)
        .ok_or(AnalysisError::MissingStream("EEG stream for participant A"))
}

/// Full analysis of a loaded recording. Trials are analysed in parallel.
pub fn analyze(recording: &Recording, config: &AnalysisConfig) -> Result<AnalysisReport, AnalysisError> {
    if !(config.hop_s > 0.0 && config.window_s >= config.hop_s) {
        return Err(AnalysisError::Config("hop must be positive and no longer than the window".into()));
    }
    if !(config.threshold_k.is_finite() && config.threshold_k > 0.0) {
        return Err(AnalysisError::Config("threshold k must be positive".into()));
    }
    let fs = eeg_rate(recording)?;
    let pipeline = config.pipeline(config.band, fs)?;
    let bands = if config.per_band {
        PhaseBand::NARROW
            .iter()
            .map(|&b| Ok((b, config.pipeline(b, fs)?)))
            .collect::<Result<Vec<_>, AnalysisError>>()?
    } else {
        Vec::new()
    };
    let motion = config.motion.and_then(|thr| Some((MotionStreams::from_recording(recording)?, thr)));
    let (spans, mut notes) = recording.manifest.trials();
    if spans.is_empty() {
        notes.push("recording has no complete trials".into());
    }

    let results: Vec<Result<TrialReport, AnalysisError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = spans
            .iter()
            .map(|span| {
                let (pipeline, bands, motion) = (&pipeline, &bands, &motion);
                scope.spawn(move || analyze_trial(recording, span, config, pipeline, bands, motion.as_ref()))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("trial analysis panicked")).collect()
    });
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut by_condition: BTreeMap<u8, (Condition, usize, Vec<f64>)> = BTreeMap::new();
    for t in &trials {
        let order = Condition::ALL.iter().position(|&c| c == t.condition).unwrap_or(0) as u8;
        let entry = by_condition.entry(order).or_insert((t.condition, 0, Vec::new()));
        entry.1 += 1;
        if let (true, Some(v)) = (t.trial_valid, t.pooled_ccorr) {
            entry.2.push(v);
        }
    }
    let conditions = by_condition
        .into_values()
        .filter(|(_, _, values)| !values.is_empty())
        .map(|(condition, trials, values)| ConditionSummary {
            condition,
            trials,
            valid_trials: values.len(),
            mean_pooled_ccorr: values.iter().sum::<f64>() / values.len() as f64,
        })
        .collect();

    let report = AnalysisReport {
        session_id: recording.manifest.session_id.clone(),
        settings: config.clone(),
        trials,
        conditions,
        notes,
    };
    if report.all_rejected() {
        log::warn!("every trial was rejected");
    }
    Ok(report)
}

fn analyze_trial(
    recording: &Recording,
    span: &TrialSpan,
    config: &AnalysisConfig,
    pipeline: &IbsPipeline,
    bands: &[(PhaseBand, IbsPipeline)],
    motion: Option<&(MotionStreams, MotionThresholds)>,
) -> Result<TrialReport, AnalysisError> {
    let epochs = epoch_offline(recording, span, config.window_s, config.hop_s)?;
    let total = epochs.len();
    let (kept, too_short) = trim_edges(epochs, config.trim);
    let analyzable = kept.len();
    let mut notes = Vec::new();
    if too_short {
        notes.push(format!(
            "too short: {total} epochs, need more than {} to trim",
            2 * config.trim
        ));
    }

    let scores: Vec<f64> = kept
        .iter()
        .map(|e| match &e.windows {
            Ok((a, b)) => spectral_energy_score(a) + spectral_energy_score(b),
            Err(_) => f64::NAN,
        })
        .collect();
    let rejection = reject_noisy_epochs(&scores, config.threshold_k);
    notes.extend(rejection.note.clone());

    let mut records = Vec::with_capacity(analyzable);
    let mut pooled_inputs = Vec::new();
    let mut band_inputs: Vec<Vec<f64>> = vec![Vec::new(); bands.len()];
    for (epoch, verdict) in kept.iter().zip(&rejection.epochs) {
        let mut record = EpochRecord {
            index: epoch.index,
            start_us: epoch.start_us,
            score: verdict.score.is_finite().then_some(verdict.score),
            spectral_valid: verdict.valid,
            motion_valid: true,
            valid: false,
            metric: None,
            note: None,
        };
        match &epoch.windows {
            Err(reason) => record.note = Some(reason),
            Ok((a, b)) => {
                record.motion_valid = motion.is_none_or(|(m, thr)| m.still(a, b, *thr));
                record.valid = record.spectral_valid && record.motion_valid;
                match pipeline.compute(a, b) {
                    Ok(m) if m.valid => record.metric = Some(m.value),
                    _ => record.note = Some("metric undefined"),
                }
                if record.valid {
                    if let Some(v) = record.metric {
                        pooled_inputs.push(v);
                    }
                    for ((_, p), acc) in bands.iter().zip(&mut band_inputs) {
                        if let Ok(m) = p.compute(a, b) {
                            if m.valid {
                                acc.push(m.value);
                            }
                        }
                    }
                }
            }
        }
        records.push(record);
    }
    let valid = records.iter().filter(|r| r.valid).count();
    let trial_valid = trial_is_valid(valid, analyzable);
    Ok(TrialReport {
        trial_id: span.trial_id,
        condition: span.condition,
        start_us: span.start_us,
        stop_us: span.stop_us,
        total,
        trimmed: total - analyzable,
        analyzable,
        valid,
        invalid: analyzable - valid,
        too_short,
        trial_valid,
        pooled_ccorr: if trial_valid { fisher_mean(&pooled_inputs) } else { None },
        median_score: rejection.median,
        mad_score: rejection.mad,
        threshold: rejection.threshold,
        notes,
        per_band: bands
            .iter()
            .zip(&band_inputs)
            .map(|((band, _), values)| BandValue {
                band: band.name(),
                pooled_ccorr: if trial_valid { fisher_mean(values) } else { None },
            })
            .collect(),
        epochs: records,
    })
}

/// Loads a recording directory and analyses it.
pub fn analyze_dir(dir: &Path, config: &AnalysisConfig) -> Result<AnalysisReport, AnalysisError> {
    analyze(&Recording::load(dir)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(epoch_count(30.0, 3.0, 0.5), 55);
        assert_eq!(epoch_count(3.0, 3.0, 0.5), 1);
        assert_eq!(epoch_count(2.0, 3.0, 0.5), 0);
        let (kept, short) = trim_edges((0..55).collect::<Vec<_>>(), 3);
        assert_eq!((kept.len(), short), (49, false));
        assert_eq!(kept[0], 3);
        assert_eq!(trim_edges((0..7).collect::<Vec<_>>(), 3).0, [3]);
        assert_eq!(trim_edges((0..6).collect::<Vec<_>>(), 3), (vec![], true));
    }

    #[test]
    fn degenerate_rejection() {
        let r = reject_noisy_epochs(&[2.0; 10], 3.0);
        assert!(r.epochs.iter().all(|e| e.valid));
        assert!(r.note.is_some());
        let r = reject_noisy_epochs(&[1.0, 100.0, 3.0], 3.0);
        assert!(r.epochs.iter().all(|e| e.valid));
        assert!(r.threshold.is_none());
        let r = reject_noisy_epochs(&[1.0, 1.1, 1.2, 1.3, 1.4, f64::NAN], 3.0);
        assert_eq!(r.epochs.iter().filter(|e| e.valid).count(), 5);
    }

    #[test]
    fn half_rule() {
        assert!(!trial_is_valid(10, 24));
        assert!(trial_is_valid(12, 24));
        assert!(!trial_is_valid(0, 0));
    }

    #[test]
    fn zero_epoch_scores_zero() {
        let w = EpochWindow {
            participant: Participant::A,
            start_timestamp_us: 0,
            sample_rate: 256.0,
            data: vec![vec![0.0; 768]; 3],
        };
        assert_eq!(spectral_energy_score(&w), 0.0);
    }
}
