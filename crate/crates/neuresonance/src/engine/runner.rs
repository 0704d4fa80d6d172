//! Session runner: wires a source, the engine, the control channel, feedback
//! endpoints and the recorder together.
//!
//! Batch sources are fed synchronously on the data clock. Paced and network
//! sources run ingestion on their own threads, each pushing into a bounded
//! per-stream queue that drops its oldest frame when full; the processing
//! loop drains the queues every tick.

use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam::queue::ArrayQueue;
use neuresonance_core::SampleFrame;

use super::control::ControlServer;
use super::session::{Command, TrialAction};
use super::{Engine, EngineCounters, EngineError, IbsUpdate, LatencyReport, Recorder, UpdateSink};
use crate::config::EngineConfig;
use crate::session::Condition;
use crate::stream::recording::{Manifest, RecordingError};
use crate::stream::replay::{replay_dir, timestamp_order, Pacing};
use crate::stream::synth::{SynthConfig, SynthSource};
use crate::stream::wire::FrameReader;
use crate::stream::{default_streams, StreamIds};

pub enum Source {
    Synth(SynthConfig),
    /// A recording directory.
    Replay(PathBuf),
    Frames(Vec<SampleFrame>),
    /// Listen for wire frames on this TCP address.
    Tcp(String),
    /// Accept wire frames on an already bound listener.
    Listener(TcpListener),
}

pub struct RunOptions {
    pub pacing: Pacing,
    /// Recording directory; `None` disables recording.
    pub record: Option<PathBuf>,
    pub session_id: String,
    /// Opens a trial of this condition for the whole run.
    pub auto_trial: Option<Condition>,
    /// Set from another thread to stop the run cleanly.
    pub stop: Arc<AtomicBool>,
    /// Wall-clock limit, mainly for network sources.
    pub max_wall: Option<Duration>,
    pub sinks: Vec<Box<dyn UpdateSink>>,
    /// Pre-bound control channel; otherwise one is bound from the
    /// configured endpoint, if any.
    pub control: Option<ControlServer>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            pacing: Pacing::Batch,
            record: None,
            session_id: "session".into(),
            auto_trial: None,
            stop: Arc::new(AtomicBool::new(false)),
            max_wall: None,
            sinks: Vec::new(),
            control: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub updates: Vec<Arc<IbsUpdate>>,
    pub latency: Option<LatencyReport>,
    pub counters: EngineCounters,
    pub queue_drops: u64,
    pub haptic_sent: u64,
    pub haptic_failed: u64,
    pub manifest: Option<Manifest>,
    pub wall: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error("control channel: {0}")]
    Control(std::io::Error),
    #[error("tcp source: {0}")]
    Listen(std::io::Error),
    #[error("synthetic source: {0}")]
    Synth(#[from] crate::stream::synth::SynthError),
    #[error("replay: {0}")]
    Replay(#[from] crate::stream::replay::ReplayHalted),
}

struct Ingest {
    queues: Vec<(u8, ArrayQueue<SampleFrame>)>,
    drops: AtomicU64,
    producers: AtomicUsize,
}

impl Ingest {
    fn new(config: &EngineConfig) -> Self {
        let ids = config.streams;
        let eeg = (config.queue_s * config.sample_rate).ceil() as usize;
        let motion = (config.queue_s * config.motion.sample_rate).ceil() as usize;
        Self {
            queues: vec![
                (ids.eeg_a, ArrayQueue::new(eeg)),
                (ids.eeg_b, ArrayQueue::new(eeg)),
                (ids.motion_a, ArrayQueue::new(motion)),
                (ids.motion_b, ArrayQueue::new(motion)),
            ],
            drops: AtomicU64::new(0),
            producers: AtomicUsize::new(0),
        }
    }

    fn push(&self, frame: SampleFrame) {
        match self.queues.iter().find(|(id, _)| *id == frame.stream_id) {
            Some((_, q)) => {
                if q.force_push(frame).is_some() {
                    self.drops.fetch_add(1, Ordering::Relaxed);
                }
            }
            None => {
                self.drops.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    fn drain(&self) -> Vec<SampleFrame> {
        let mut frames = Vec::new();
        for (_, q) in &self.queues {
            while let Some(f) = q.pop() {
                frames.push(f);
            }
        }
        timestamp_order(&mut frames);
        frames
    }

    fn is_empty(&self) -> bool {
        self.queues.iter().all(|(_, q)| q.is_empty())
    }
}

struct Producer<'a>(&'a Ingest);

impl<'a> Producer<'a> {
    fn start(ingest: &'a Ingest) -> Self {
        ingest.producers.fetch_add(1, Ordering::SeqCst);
        Self(ingest)
    }
}

impl Drop for Producer<'_> {
    fn drop(&mut self) {
        self.0.producers.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Runs one session to completion.
pub fn run(config: EngineConfig, source: Source, mut options: RunOptions) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    let mut engine = Engine::new(config.clone())?;
    engine.connect_endpoints()?;
    for sink in options.sinks.drain(..) {
        engine.add_sink(sink);
    }
    let control = match (options.control.take(), &config.endpoints.control) {
        (Some(server), _) => Some(server),
        (None, Some(addr)) => Some(ControlServer::bind(addr).map_err(RunError::Control)?),
        (None, None) => None,
    };
    if let Some(server) = &control {
        log::info!("control channel on {}", server.addr());
        engine.add_sink(Box::new(server.sink()));
    }

    let synth = match &source {
        Source::Synth(cfg) => {
            let src = SynthSource::with_streams(cfg.clone(), config.streams)?;
            engine.attach_synth(src.coupling_handle());
            Some(src)
        }
        _ => None,
    };
    if let Some(dir) = &options.record {
        let motion_rate = synth.as_ref().map_or(config.motion.sample_rate, |s| s.config().motion_rate);
        let mut manifest = Manifest::new(
            options.session_id.clone(),
            default_streams(&config.streams, config.channel_count, config.sample_rate, motion_rate),
        );
        manifest.config = serde_json::json!({
            "engine": config,
            "synth": synth.as_ref().map(|s| s.config()),
        });
        engine.attach_recorder(Recorder::create(dir, manifest)?);
    }
    if let Some(condition) = options.auto_trial {
        engine.command(Command::SetCondition {
            label: condition.label().into(),
        });
        engine.command(Command::MarkTrial {
            action: TrialAction::Start,
        });
    }

    let mut updates = Vec::new();
    let ingest = Ingest::new(&config);
    let tick = Duration::from_millis(config.tick_ms);
    let mut loop_ctx = LoopCtx {
        control: control.as_ref(),
        stop: &options.stop,
        deadline: options.max_wall.map(|d| started + d),
    };

    match (source, options.pacing) {
        (Source::Synth(_), Pacing::Batch) => {
            let mut src = synth.expect("synth source built above");
            let tick_us = config.tick_ms * 1000;
            let mut until = tick_us;
            while !src.is_finished() && loop_ctx.keep_going(&mut engine) {
                for frame in src.frames_until(until) {
                    engine.ingest(&frame);
                }
                updates.extend(engine.tick());
                until += tick_us;
            }
        }
        (Source::Replay(dir), Pacing::Batch) => {
            let mut frames = Vec::new();
            replay_dir(&dir, Pacing::Batch, |f| {
                frames.push(f);
                true
            })?;
            updates.extend(feed_batch(&mut engine, &frames, &mut loop_ctx));
        }
        (Source::Frames(mut frames), Pacing::Batch) => {
            timestamp_order(&mut frames);
            updates.extend(feed_batch(&mut engine, &frames, &mut loop_ctx));
        }
        (source, pacing) => {
            let speed = match pacing {
                Pacing::Speed(s) => s,
                Pacing::Batch => f64::INFINITY,
            };
            let producer_stop = AtomicBool::new(false);
            thread::scope(|scope| -> Result<(), RunError> {
                let handles = spawn_producers(scope, source, synth, speed, &ingest, &producer_stop, &config)?;
                let mut next = Instant::now() + tick;
                loop {
                    for frame in ingest.drain() {
                        engine.ingest(&frame);
                    }
                    updates.extend(engine.tick());
                    let producers_done = ingest.producers.load(Ordering::SeqCst) == 0 && ingest.is_empty();
                    if producers_done || !loop_ctx.keep_going(&mut engine) {
                        break;
                    }
                    let now = Instant::now();
                    if next > now {
                        thread::sleep(next - now);
                    }
                    next += tick;
                }
                producer_stop.store(true, Ordering::SeqCst);
                for h in handles {
                    let _ = h.join();
                }
                for frame in ingest.drain() {
                    engine.ingest(&frame);
                }
                updates.extend(engine.tick());
                Ok(())
            })?;
        }
    }

    if options.auto_trial.is_some() {
        engine.command(Command::MarkTrial {
            action: TrialAction::Stop,
        });
    }
    loop_ctx.serve_control(&mut engine);
    updates.extend(engine.finish());

    let (haptic_sent, haptic_failed) = match engine.take_haptic() {
        Some(h) => {
            let counters = h.counters();
            h.shutdown();
            (
                counters.sent.load(Ordering::Relaxed),
                counters.failed.load(Ordering::Relaxed),
            )
        }
        None => (0, 0),
    };
    let manifest = engine.take_recorder().map(Recorder::finish).transpose()?;
    Ok(RunSummary {
        latency: engine.latency_stats(),
        counters: engine.counters(),
        queue_drops: ingest.drops.load(Ordering::Relaxed),
        haptic_sent,
        haptic_failed,
        updates,
        manifest,
        wall: started.elapsed(),
    })
}

struct LoopCtx<'a> {
    control: Option<&'a ControlServer>,
    stop: &'a AtomicBool,
    deadline: Option<Instant>,
}

impl LoopCtx<'_> {
    fn serve_control(&mut self, engine: &mut Engine) {
        let Some(control) = self.control else { return };
        for request in control.pending() {
            match request.parse() {
                Ok(command) => request.answer(&engine.command(command)),
                Err(e) => request.reject_unparsable(&e),
            }
        }
    }

    fn keep_going(&mut self, engine: &mut Engine) -> bool {
        self.serve_control(engine);
        !self.stop.load(Ordering::Relaxed)
            && engine.running()
            && self.deadline.is_none_or(|d| Instant::now() < d)
    }
}

fn feed_batch(engine: &mut Engine, frames: &[SampleFrame], ctx: &mut LoopCtx<'_>) -> Vec<Arc<IbsUpdate>> {
    let tick_us = engine.config().tick_ms * 1000;
    let mut out = Vec::new();
    let mut next_tick: Option<u64> = None;
    for frame in frames {
        let due = *next_tick.get_or_insert(frame.timestamp_us + tick_us);
        if frame.timestamp_us >= due {
            out.extend(engine.tick());
            if !ctx.keep_going(engine) {
                return out;
            }
            next_tick = Some(due + tick_us * ((frame.timestamp_us - due) / tick_us + 1));
        }
        engine.ingest(frame);
    }
    out.extend(engine.tick());
    out
}

fn spawn_producers<'scope, 'env>(
    scope: &'scope thread::Scope<'scope, 'env>,
    source: Source,
    synth: Option<SynthSource>,
    speed: f64,
    ingest: &'env Ingest,
    stop: &'env AtomicBool,
    config: &'env EngineConfig,
) -> Result<Vec<thread::ScopedJoinHandle<'scope, ()>>, RunError> {
    let mut handles = Vec::new();
    match source {
        Source::Synth(_) => {
            let mut src = synth.expect("synth source built above");
            let producer = Producer::start(ingest);
            handles.push(scope.spawn(move || {
                let _producer = producer;
                let begin = Instant::now();
                let chunk_us = 10_000;
                let mut until = chunk_us;
                while !src.is_finished() && !stop.load(Ordering::Relaxed) {
                    let due = Duration::from_secs_f64(until as f64 / 1e6 / speed);
                    if let Some(wait) = due.checked_sub(begin.elapsed()) {
                        thread::sleep(wait);
                    }
                    for frame in src.frames_until(until) {
                        ingest.push(frame);
                    }
                    until += chunk_us;
                }
            }));
        }
        Source::Replay(dir) => {
            let producer = Producer::start(ingest);
            let pacing = if speed.is_finite() { Pacing::Speed(speed) } else { Pacing::Batch };
            handles.push(scope.spawn(move || {
                let _producer = producer;
                if let Err(e) = replay_dir(&dir, pacing, |f| {
                    ingest.push(f);
                    !stop.load(Ordering::Relaxed)
                }) {
                    log::error!("{e}");
                }
            }));
        }
        Source::Frames(mut frames) => {
            timestamp_order(&mut frames);
            let producer = Producer::start(ingest);
            let pacing = if speed.is_finite() { Pacing::Speed(speed) } else { Pacing::Batch };
            handles.push(scope.spawn(move || {
                let _producer = producer;
                crate::stream::replay::replay_frames(frames, pacing, |f| {
                    ingest.push(f);
                    !stop.load(Ordering::Relaxed)
                });
            }));
        }
        Source::Tcp(_) | Source::Listener(_) => {
            let listener = match source {
                Source::Listener(l) => l,
                Source::Tcp(addr) => TcpListener::bind(&addr).map_err(RunError::Listen)?,
                _ => unreachable!(),
            };
            listener.set_nonblocking(true).map_err(RunError::Listen)?;
            log::info!("listening for frames on {}", listener.local_addr().map_err(RunError::Listen)?);
            let layout = config.streams.layout(config.channel_count as u8);
            // The listener keeps the run alive until stopped.
            let producer = Producer::start(ingest);
            handles.push(scope.spawn(move || {
                let _producer = producer;
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let layout = layout.clone();
                            let producer = Producer::start(ingest);
                            scope.spawn(move || {
                                let _producer = producer;
                                let _ = stream.set_nonblocking(false);
                                let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
                                let mut reader = FrameReader::new(stream, layout);
                                read_connection(&mut reader, ingest, stop, peer);
                            });
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(20));
                        }
                        Err(e) => {
                            log::warn!("accept: {e}");
                            thread::sleep(Duration::from_millis(20));
                        }
                    }
                }
            }));
        }
    }
    Ok(handles)
}

fn read_connection<R: std::io::Read>(
    reader: &mut FrameReader<R>,
    ingest: &Ingest,
    stop: &AtomicBool,
    peer: std::net::SocketAddr,
) {
    use crate::stream::wire::ReadFrameError;
    while !stop.load(Ordering::Relaxed) {
        match reader.read_frame() {
            Ok(Some(frame)) => ingest.push(frame),
            Ok(None) => break,
            Err(ReadFrameError::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
            {
                // A timeout mid-frame loses sync; only header boundaries are safe.
                continue;
            }
            Err(e) => {
                log::warn!("{peer}: {e}; closing connection");
                break;
            }
        }
    }
}

/// Stream ids as configured, for callers assembling frames by hand.
pub fn stream_ids(config: &EngineConfig) -> StreamIds {
    config.streams
}
