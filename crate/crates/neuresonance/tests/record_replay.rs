mod common;

use std::fs::OpenOptions;
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::synth;
use neuresonance::config::EngineConfig;
use neuresonance::engine::runner::{run, RunError, RunOptions, RunSummary, Source};
use neuresonance::engine::IbsUpdate;
use neuresonance::session::Condition;
use neuresonance::stream::recording::{Manifest, Recording, FRAMES_FILE, UPDATES_FILE};
use neuresonance::stream::replay::Pacing;
use neuresonance::stream::synth::synth_dual_eeg;
use neuresonance::stream::wire::encode_frame;
use neuresonance::stream::{default_streams, StreamIds};

fn record_synth(dir: &Path, seconds: f64, seed: u64) -> RunSummary {
    run(
        EngineConfig::default(),
        Source::Synth(synth(seconds, 0.6, seed)),
        RunOptions {
            record: Some(dir.to_path_buf()),
            auto_trial: Some(Condition::Visual),
            ..Default::default()
        },
    )
    .unwrap()
}

fn replay(dir: &Path, pacing: Pacing, record: Option<&Path>) -> Result<RunSummary, RunError> {
    run(
        EngineConfig::default(),
        Source::Replay(dir.to_path_buf()),
        RunOptions {
            pacing,
            record: record.map(Path::to_path_buf),
            auto_trial: Some(Condition::Visual),
            ..Default::default()
        },
    )
}

fn untimed(updates: &[Arc<IbsUpdate>]) -> Vec<IbsUpdate> {
    updates.iter().map(|u| u.untimed()).collect()
}

#[test]
fn replay_reproduces_the_live_updates() {
    let tmp = tempfile::tempdir().unwrap();
    let live = record_synth(tmp.path(), 20.0, 21);
    let first = replay(tmp.path(), Pacing::Batch, None).unwrap();
    let second = replay(tmp.path(), Pacing::Batch, None).unwrap();
    assert_eq!(live.updates.len(), 12);
    assert_eq!(untimed(&first.updates), untimed(&live.updates));
    assert_eq!(untimed(&first.updates), untimed(&second.updates));

    let logged: Vec<serde_json::Value> = std::fs::read_to_string(tmp.path().join(UPDATES_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(logged.len(), live.updates.len());
    for (l, u) in logged.iter().zip(&live.updates) {
        assert_eq!(l["metric"]["value"].as_f64().unwrap(), u.metric.value);
        assert_eq!(l["level"], u.level);
    }
}

#[test]
fn record_replay_record_keeps_every_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    record_synth(&a, 8.0, 22);
    replay(&a, Pacing::Batch, Some(&b)).unwrap();
    let ra = Recording::load(&a).unwrap();
    let rb = Recording::load(&b).unwrap();
    assert_eq!(ra.frames.len(), 8 * (2 * 256 + 2 * 100));
    assert_eq!(ra.frames, rb.frames);
    assert_eq!(ra.manifest.streams, rb.manifest.streams);
    assert_eq!(ra.manifest.markers, rb.manifest.markers);
}

#[test]
fn empty_recording_replays_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = Recording {
        manifest: Manifest::new("empty", default_streams(&StreamIds::default(), 14, 256.0, 100.0)),
        frames: Vec::new(),
    };
    empty.save(tmp.path()).unwrap();
    let s = replay(tmp.path(), Pacing::Batch, None).unwrap();
    assert!(s.updates.is_empty());
    assert!(s.latency.is_none());
    let s = replay(tmp.path(), Pacing::Speed(1.0), None).unwrap();
    assert!(s.updates.is_empty());
}

#[test]
fn corrupt_log_halts_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    record_synth(tmp.path(), 4.0, 23);
    let log = tmp.path().join(FRAMES_FILE);
    let len = std::fs::metadata(&log).unwrap().len();
    let mut f = OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(&[0xAB; 7]).unwrap();
    drop(f);
    match replay(tmp.path(), Pacing::Batch, None) {
        Err(RunError::Replay(halted)) => {
            assert_eq!(halted.delivered, 4 * (2 * 256 + 2 * 100));
            assert!(halted.to_string().contains(&len.to_string()), "{halted}");
        }
        other => panic!("expected a replay error, got {:?}", other.map(|s| s.updates.len())),
    }
}

#[test]
fn double_speed_takes_half_the_time() {
    let tmp = tempfile::tempdir().unwrap();
    record_synth(tmp.path(), 6.0, 24);
    let started = Instant::now();
    let s = replay(tmp.path(), Pacing::Speed(2.0), None).unwrap();
    let wall = started.elapsed().as_secs_f64();
    assert!((2.8..4.0).contains(&wall), "{wall}");
    assert_eq!(s.updates.len(), 3);
}

#[test]
#[ignore = "takes 30 s"]
fn double_speed_sixty_seconds() {
    let tmp = tempfile::tempdir().unwrap();
    record_synth(tmp.path(), 60.0, 25);
    let started = Instant::now();
    let s = replay(tmp.path(), Pacing::Speed(2.0), None).unwrap();
    let wall = started.elapsed().as_secs_f64();
    assert!((29.5..31.5).contains(&wall), "{wall}");
    assert_eq!(s.updates.len(), 39);
}

/// Streams `frames` over TCP in chunks of `chunk_s` seconds of data, pausing
/// between chunks.
fn tcp_run(
    config: EngineConfig,
    frames: Vec<neuresonance::core::SampleFrame>,
    chunk_s: f64,
    pause: Duration,
) -> RunSummary {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let stop_engine = Arc::clone(&stop);
    let engine = std::thread::spawn(move || {
        run(
            config,
            Source::Listener(listener),
            RunOptions {
                pacing: Pacing::Speed(1.0),
                auto_trial: Some(Condition::Visual),
                stop: stop_engine,
                ..Default::default()
            },
        )
        .unwrap()
    });
    let mut stream = TcpStream::connect(addr).unwrap();
    let chunk_us = (chunk_s * 1e6) as u64;
    let mut bytes = Vec::new();
    let mut boundary = chunk_us;
    for f in &frames {
        if f.timestamp_us >= boundary {
            stream.write_all(&bytes).unwrap();
            bytes.clear();
            boundary += chunk_us;
            std::thread::sleep(pause);
        }
        bytes.extend(encode_frame(f).unwrap());
    }
    stream.write_all(&bytes).unwrap();
    drop(stream);
    std::thread::sleep(Duration::from_millis(800));
    stop.store(true, Ordering::SeqCst);
    engine.join().unwrap()
}

#[test]
fn tcp_source_matches_batch() {
    let frames = synth_dual_eeg(&synth(10.0, 0.6, 26)).unwrap().frames;
    let live = tcp_run(EngineConfig::default(), frames.clone(), 0.5, Duration::from_millis(20));
    let batch = run(
        EngineConfig::default(),
        Source::Frames(frames.clone()),
        RunOptions {
            auto_trial: Some(Condition::Visual),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(live.counters.frames_accepted as usize, frames.len());
    assert_eq!(live.queue_drops, 0);
    assert_eq!(untimed(&live.updates), untimed(&batch.updates));
    assert_eq!(live.updates.len(), 5);
}

#[test]
fn overflowing_queue_drops_oldest_and_breaks_windows() {
    let frames = synth_dual_eeg(&synth(12.0, 0.6, 27)).unwrap().frames;
    let config = EngineConfig {
        queue_s: 3.0,
        ..Default::default()
    };
    let s = tcp_run(config, frames.clone(), 6.0, Duration::from_millis(300));
    assert!(s.queue_drops > 0);
    assert_eq!(s.counters.frames_accepted + s.queue_drops, frames.len() as u64);
    assert!(s.updates.iter().any(|u| !u.metric.valid));
}
