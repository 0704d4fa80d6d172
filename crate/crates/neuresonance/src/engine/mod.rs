//! The real-time engine: one owner of all pipeline state, driven by
//! [`Engine::ingest`] for every frame and [`Engine::tick`] on the tick clock.
//!
//! Each tick applies queued control events, then computes every hop whose
//! windows (and motion coverage) are complete:
//! metric → motion gate → level → modality spec → OSC / haptic / sinks /
//! recording.

mod align;
pub mod control;
pub mod latency;
mod recorder;
pub mod runner;
pub mod session;

use std::sync::Arc;
use std::time::Instant;

use neuresonance_core::feedback::{
    map_audio, map_haptic, map_visual, quantize_level, BinEdges, ChordSpec, FeedbackLevel,
    HapticPattern, HapticTable, RingSpec, VisualConfig,
};
use neuresonance_core::metric::{IbsMetric, IbsPipeline, MetricError};
use neuresonance_core::motion::{classify_span, MotionGate, MotionSample, MotionThresholds, MotionVerdict};
use neuresonance_core::{EpochWindow, Participant, SampleFrame};
use serde::Serialize;

pub use align::{EegBuffer, Lookup, MotionBuffer};
pub use latency::{LatencyRecorder, LatencyReport, Percentiles, Stage, StageTimes};
pub use recorder::Recorder;
pub use session::{Ack, Command, Session, SessionEvent, SessionState, TrialAction};

use crate::config::{ConfigError, EngineConfig};
use crate::dispatch::{DispatchError, HapticDispatcher, OscSender};
use crate::session::{Condition, Modality};
use crate::stream::recording::{CouplingPoint, MarkerKind, StreamKind, TrialMarker};
use crate::stream::synth::CouplingHandle;
use crate::stream::StreamIds;
use session::Outcome;

/// One published result, immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IbsUpdate {
    pub seq: u64,
    pub metric: IbsMetric,
    pub level: u8,
    pub modality: Modality,
    pub condition: Option<Condition>,
    pub trial_id: Option<u32>,
    pub trial_open: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chord: Option<ChordSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub haptic: Option<HapticPattern>,
    /// Motion rejection for participants A and B.
    pub motion_rejected: [bool; 2],
    /// Homologous pairs excluded as degenerate.
    pub dropped_channels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<&'static str>,
    pub compute_latency_ms: f64,
    pub stages: StageTimes,
}

impl IbsUpdate {
    /// Equality ignoring timing, for determinism checks.
    pub fn same_content(&self, other: &IbsUpdate) -> bool {
        self.untimed() == other.untimed()
    }

    pub fn untimed(&self) -> IbsUpdate {
        IbsUpdate {
            compute_latency_ms: 0.0,
            stages: StageTimes::default(),
            ..self.clone()
        }
    }
}

/// Receives every update as a shared immutable snapshot.
pub trait UpdateSink: Send {
    fn publish(&mut self, update: &Arc<IbsUpdate>);
}

impl UpdateSink for crossbeam::channel::Sender<Arc<IbsUpdate>> {
    fn publish(&mut self, update: &Arc<IbsUpdate>) {
        let _ = self.send(Arc::clone(update));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EngineCounters {
    pub frames_accepted: u64,
    pub frames_rejected: u64,
    pub unknown_stream: u64,
    pub updates: u64,
    pub valid: u64,
    pub held: u64,
    pub invalid: u64,
    pub broken_windows: u64,
    pub osc_sent: u64,
    pub osc_errors: u64,
    pub haptic_queued: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("metric pipeline: {0}")]
    Metric(#[from] MetricError),
    #[error("feedback endpoint: {0}")]
    Dispatch(#[from] DispatchError),
}

/// How a window pair for one hop resolved.
enum HopInput {
    Pair(EpochWindow, EpochWindow),
    Broken(&'static str),
}

pub struct Engine {
    config: EngineConfig,
    ids: StreamIds,
    pipeline: IbsPipeline,
    edges: BinEdges,
    visual: VisualConfig,
    haptic_table: HapticTable,
    thresholds: MotionThresholds,
    eeg: [EegBuffer; 2],
    motion: [MotionBuffer; 2],
    origin_us: Option<u64>,
    next_hop: u64,
    window_len: usize,
    hop_us: f64,
    period_us: f64,
    motion_period_us: u64,
    gate: MotionGate,
    session: Session,
    latency: LatencyRecorder,
    sinks: Vec<Box<dyn UpdateSink>>,
    osc: Option<OscSender>,
    haptic: Option<HapticDispatcher>,
    haptic_armed: bool,
    recorder: Option<Recorder>,
    synth: Option<CouplingHandle>,
    counters: EngineCounters,
    seq: u64,
    last_update: Option<Arc<IbsUpdate>>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let window_len = config.window_len();
        let pipeline = IbsPipeline::new(config.ibs_config(), config.sample_rate, window_len)?;
        let eeg = [Participant::A, Participant::B]
            .map(|p| EegBuffer::new(p, config.channel_count, config.sample_rate));
        Ok(Self {
            ids: config.streams,
            pipeline,
            edges: config.bin_edges(),
            visual: config.visual.config(),
            haptic_table: config.haptic.table(),
            thresholds: config.motion.thresholds(),
            eeg,
            motion: Default::default(),
            origin_us: None,
            next_hop: 0,
            window_len,
            hop_us: config.hop_s * 1e6,
            period_us: 1e6 / config.sample_rate,
            motion_period_us: (1e6 / config.motion.sample_rate).round() as u64,
            gate: MotionGate::new(config.motion.max_hold),
            session: Session::new(config.modality),
            latency: LatencyRecorder::default(),
            sinks: Vec::new(),
            osc: None,
            haptic: None,
            haptic_armed: false,
            recorder: None,
            synth: None,
            counters: EngineCounters::default(),
            seq: 0,
            last_update: None,
            config,
        })
    }

    /// Opens the OSC and haptic endpoints named in the configuration.
    pub fn connect_endpoints(&mut self) -> Result<(), EngineError> {
        if let Some(target) = self.config.endpoints.osc.clone() {
            self.osc = Some(OscSender::connect(&target)?);
        }
        if let Some(url) = self.config.endpoints.haptic.clone() {
            let timeout = std::time::Duration::from_millis(self.config.haptic.timeout_ms);
            self.haptic = Some(HapticDispatcher::spawn(url, timeout));
        }
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn add_sink(&mut self, sink: Box<dyn UpdateSink>) {
        self.sinks.push(sink);
    }

    pub fn attach_recorder(&mut self, recorder: Recorder) {
        self.recorder = Some(recorder);
    }

    pub fn take_recorder(&mut self) -> Option<Recorder> {
        self.recorder.take()
    }

    pub fn attach_synth(&mut self, handle: CouplingHandle) {
        self.synth = Some(handle);
    }

    pub fn haptic(&self) -> Option<&HapticDispatcher> {
        self.haptic.as_ref()
    }

    pub fn take_haptic(&mut self) -> Option<HapticDispatcher> {
        self.haptic.take()
    }

    pub fn session(&self) -> &SessionState {
        self.session.active()
    }

    pub fn counters(&self) -> EngineCounters {
        self.counters
    }

    pub fn last_update(&self) -> Option<&Arc<IbsUpdate>> {
        self.last_update.as_ref()
    }

    /// Per-stage p50/p95/max; `None` before the first update.
    pub fn latency_stats(&self) -> Option<LatencyReport> {
        self.latency.report()
    }

    pub fn reset_latency_stats(&mut self) {
        self.latency.reset();
    }

    /// Latest EEG timestamp seen on either participant.
    pub fn data_clock_us(&self) -> u64 {
        self.eeg
            .iter()
            .filter_map(EegBuffer::last_us)
            .max()
            .unwrap_or(0)
    }

    /// Accepts one frame. Malformed frames are counted and dropped; returns
    /// whether the frame was taken.
    pub fn ingest(&mut self, frame: &SampleFrame) -> bool {
        let accepted = match self.ids.classify(frame.stream_id) {
            Some((StreamKind::Eeg, p)) => {
                let ok = self.eeg[p.index()].push(frame).is_ok();
                if ok && self.origin_us.is_none() {
                    self.origin_us = Some(frame.timestamp_us);
                    self.apply_events(frame.timestamp_us);
                }
                ok
            }
            Some((StreamKind::Motion, p)) => {
                MotionSample::from_channels(p, frame.timestamp_us, &frame.channels)
                    .is_some_and(|s| self.motion[p.index()].push(s))
            }
            None => {
                self.counters.unknown_stream += 1;
                false
            }
        };
        if accepted {
            self.counters.frames_accepted += 1;
            if let Some(r) = &self.recorder {
                r.frame(frame);
            }
        } else {
            self.counters.frames_rejected += 1;
        }
        accepted
    }

    /// Handles a control command; state changes apply at the next tick.
    pub fn command(&mut self, command: Command) -> Ack {
        let name = command.name();
        let outcome = match command {
            Command::SetCondition { label } => self.session.set_condition(&label),
            Command::MarkTrial { action } => self.session.mark_trial(action),
            Command::SetModality { modality } => self.session.set_modality(&modality),
            Command::SetSynthCoupling { value } => match &self.synth {
                None => Outcome::Rejected("no synthetic source attached".into()),
                Some(handle) => match handle.set(value) {
                    Ok(()) => {
                        if let Some(r) = &self.recorder {
                            r.coupling(CouplingPoint {
                                timestamp_us: self.data_clock_us(),
                                kappa: value,
                            });
                        }
                        Outcome::Accepted
                    }
                    Err(e) => Outcome::Rejected(e.to_string()),
                },
            },
            Command::Status => Outcome::Accepted,
            Command::Stop => self.session.stop(),
        };
        let (ok, message) = match outcome {
            Outcome::Accepted => (true, None),
            Outcome::Warning(m) => {
                log::warn!("{name}: {m}");
                (true, Some(m))
            }
            Outcome::Rejected(m) => {
                log::warn!("{name} rejected: {m}");
                (false, Some(m))
            }
        };
        Ack {
            command: name,
            ok,
            message,
            state: self.session.requested().clone(),
        }
    }

    /// False once a stop has been requested.
    pub fn running(&self) -> bool {
        self.session.active().running && self.session.requested().running
    }

    /// Applies pending control events, then publishes every ready hop.
    pub fn tick(&mut self) -> Vec<Arc<IbsUpdate>> {
        if self.origin_us.is_some() {
            self.apply_events(self.data_clock_us());
        }
        self.process(false)
    }

    /// Commands issued before any EEG arrives take effect at the first
    /// sample, so their markers carry its timestamp.
    fn apply_events(&mut self, clock: u64) {
        for event in self.session.apply_pending() {
            let marker = match event {
                SessionEvent::TrialStart {
                    trial_id,
                    condition,
                } => Some(TrialMarker {
                    timestamp_us: clock,
                    trial_id,
                    kind: MarkerKind::Start,
                    condition: Some(condition),
                }),
                SessionEvent::TrialStop { trial_id } => Some(TrialMarker {
                    timestamp_us: clock,
                    trial_id,
                    kind: MarkerKind::Stop,
                    condition: None,
                }),
                _ => None,
            };
            if let (Some(m), Some(r)) = (marker, &self.recorder) {
                r.marker(m);
            }
        }
    }

    /// End of input: publishes hops that were only waiting on motion data.
    pub fn finish(&mut self) -> Vec<Arc<IbsUpdate>> {
        let clock = self.data_clock_us();
        self.apply_events(clock);
        let mut out = self.process(false);
        out.extend(self.process(true));
        out
    }

    fn hop_start(&self, origin: u64, k: u64) -> u64 {
        origin + (k as f64 * self.hop_us).round() as u64
    }

    fn process(&mut self, draining: bool) -> Vec<Arc<IbsUpdate>> {
        let mut out = Vec::new();
        let Some(origin) = self.origin_us else {
            return out;
        };
        loop {
            let start = self.hop_start(origin, self.next_hop);
            let end = start + (self.window_len as f64 * self.period_us).round() as u64;
            let Some(input) = self.resolve_hop(start, end) else {
                break;
            };
            if let HopInput::Pair(..) = input {
                if !draining && !self.motion_covered(end) {
                    break;
                }
            }
            let update = match input {
                HopInput::Pair(a, b) => self.compute(start, a, b),
                HopInput::Broken(reason) => {
                    self.counters.broken_windows += 1;
                    self.build_invalid(start, reason)
                }
            };
            out.push(update);
            self.next_hop += 1;
            let next = self.hop_start(origin, self.next_hop);
            let keep_from = (next as f64 - self.period_us) as u64;
            for buf in &mut self.eeg {
                buf.discard_before(keep_from);
            }
            for buf in &mut self.motion {
                buf.discard_before(next.saturating_sub(2 * self.motion_period_us));
            }
        }
        out
    }

    /// Pair for the hop at `start`, or `None` while data is still missing.
    fn resolve_hop(&self, start: u64, end: u64) -> Option<HopInput> {
        let lookups = [0, 1].map(|i| self.eeg[i].window_at(start, self.window_len));
        // A stream that stopped while the other ran on past this window plus
        // a hop will not fill it any more.
        let stalled = |i: usize| {
            let other = self.eeg[1 - i].last_us().unwrap_or(0) as f64;
            other > end as f64 + self.hop_us
        };
        match lookups {
            [Lookup::Ready(a), Lookup::Ready(b)] => Some(HopInput::Pair(a, b)),
            [Lookup::Broken(r), _] | [_, Lookup::Broken(r)] => Some(HopInput::Broken(r)),
            _ if stalled(0) || stalled(1) => Some(HopInput::Broken("stream stalled")),
            _ => None,
        }
    }

    /// Motion samples reach the end of the window on both participants, or
    /// cannot be expected to.
    fn motion_covered(&self, end_us: u64) -> bool {
        if !self.config.motion.enabled {
            return true;
        }
        let eeg_clock = self.data_clock_us() as f64;
        self.motion.iter().all(|m| match m.last_us() {
            None => true,
            Some(last) => {
                last + self.motion_period_us >= end_us || eeg_clock > end_us as f64 + self.hop_us
            }
        })
    }

    fn verdict(&self, p: Participant, start: u64, end: u64) -> MotionVerdict {
        if !self.config.motion.enabled {
            return MotionVerdict::accepted(start, end);
        }
        classify_span(
            self.motion[p.index()].samples(),
            start,
            end,
            self.motion_period_us,
            self.thresholds,
        )
    }

    fn compute(&mut self, start: u64, a: EpochWindow, b: EpochWindow) -> Arc<IbsUpdate> {
        let mut times = StageTimes::default();
        let mut dropped = 0;
        let mut reason = None;
        let metric = match self.pipeline.check_pair(&a, &b) {
            Err(_) => {
                reason = Some("windows misaligned");
                IbsMetric::invalid(start)
            }
            Ok(()) => {
                let t = Instant::now();
                let filtered = (self.pipeline.filter(&a), self.pipeline.filter(&b));
                times.set(Stage::Filter, t.elapsed());
                match filtered {
                    (Ok(fa), Ok(fb)) => {
                        let t = Instant::now();
                        let pa = self.pipeline.phases(&fa);
                        let pb = self.pipeline.phases(&fb);
                        times.set(Stage::Phase, t.elapsed());
                        let t = Instant::now();
                        let corr = self.pipeline.correlations(&pa, &pb);
                        times.set(Stage::Ccorr, t.elapsed());
                        let t = Instant::now();
                        let m = self.pipeline.pool(&corr, a.start_timestamp_us.min(b.start_timestamp_us));
                        times.set(Stage::Pool, t.elapsed());
                        dropped = corr.dropped();
                        if !m.valid {
                            reason = Some("too few usable channel pairs");
                        }
                        m
                    }
                    _ => {
                        reason = Some("filter failed");
                        IbsMetric::invalid(start)
                    }
                }
            }
        };

        let t = Instant::now();
        let end = a.end_timestamp_us().max(b.end_timestamp_us());
        let va = self.verdict(Participant::A, a.start_timestamp_us, end);
        let vb = self.verdict(Participant::B, b.start_timestamp_us, end);
        times.set(Stage::Motion, t.elapsed());

        let t = Instant::now();
        let gated = self.gate.apply(metric, &va, &vb);
        self.session.set_consecutive_holds(self.gate.consecutive_holds());
        times.set(Stage::Gate, t.elapsed());
        if !gated.valid && reason.is_none() {
            reason = Some(if self.gate.consecutive_holds() > self.config.motion.max_hold {
                "motion hold limit reached"
            } else {
                "motion artifact with no earlier valid value"
            });
        }
        self.publish(gated, [va.rejected, vb.rejected], dropped, reason, times)
    }

    fn build_invalid(&mut self, start: u64, reason: &'static str) -> Arc<IbsUpdate> {
        self.publish(IbsMetric::invalid(start), [false; 2], 0, Some(reason), StageTimes::default())
    }

    fn publish(
        &mut self,
        metric: IbsMetric,
        motion_rejected: [bool; 2],
        dropped_channels: usize,
        invalid_reason: Option<&'static str>,
        mut times: StageTimes,
    ) -> Arc<IbsUpdate> {
        let t = Instant::now();
        let state = self.session.active().clone();
        let level = if state.trial_open {
            quantize_level(&metric, &self.edges)
        } else {
            FeedbackLevel::NEUTRAL
        };
        let modality = state.modality;
        let ring = (modality == Modality::Visual).then(|| map_visual(level, &self.visual));
        let chord = (modality == Modality::Auditory).then(|| map_audio(level, self.config.audio_preset));
        let haptic = (modality == Modality::Haptic).then(|| map_haptic(level, &self.haptic_table));

        if let Some(osc) = &self.osc {
            match osc.send(metric.value as f32, i32::from(level.get())) {
                Ok(()) => self.counters.osc_sent += 1,
                Err(e) => {
                    self.counters.osc_errors += 1;
                    log::warn!("osc send to {} failed: {e}", osc.target());
                }
            }
        }
        match (&mut self.haptic, haptic) {
            (Some(dispatcher), Some(pattern)) => {
                self.haptic_armed = true;
                if dispatcher.submit(pattern) {
                    self.counters.haptic_queued += 1;
                }
            }
            (Some(dispatcher), None) if self.haptic_armed => {
                self.haptic_armed = false;
                dispatcher.reset_dedupe();
            }
            _ => {}
        }
        times.set(Stage::Dispatch, t.elapsed());

        let update = Arc::new(IbsUpdate {
            seq: self.seq,
            metric,
            level: level.get(),
            modality,
            condition: state.condition,
            trial_id: state.trial_id.filter(|_| state.trial_open),
            trial_open: state.trial_open,
            ring,
            chord,
            haptic,
            motion_rejected,
            dropped_channels,
            invalid_reason: invalid_reason.filter(|_| !metric.valid),
            compute_latency_ms: times.total(),
            stages: times,
        });
        self.seq += 1;
        self.latency.record(&times);
        self.counters.updates += 1;
        match (metric.valid, metric.held) {
            (true, true) => self.counters.held += 1,
            (true, false) => self.counters.valid += 1,
            (false, _) => self.counters.invalid += 1,
        }
        for sink in &mut self.sinks {
            sink.publish(&update);
        }
        if let Some(r) = &self.recorder {
            r.update(&update);
        }
        self.last_update = Some(Arc::clone(&update));
        update
    }

    /// Feeds recorded frames in order, ticking on the data clock every
    /// `tick_ms`, then drains. Used for batch replay and offline checks.
    pub fn run_frames<'a>(
        &mut self,
        frames: impl IntoIterator<Item = &'a SampleFrame>,
    ) -> Vec<Arc<IbsUpdate>> {
        let tick_us = self.config.tick_ms * 1000;
        let mut next_tick: Option<u64> = None;
        let mut out = Vec::new();
        for frame in frames {
            let due = *next_tick.get_or_insert(frame.timestamp_us + tick_us);
            if frame.timestamp_us >= due {
                out.extend(self.tick());
                next_tick = Some(due + tick_us * ((frame.timestamp_us - due) / tick_us + 1));
            }
            self.ingest(frame);
        }
        out.extend(self.finish());
        out
    }
}
