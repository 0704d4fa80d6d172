//! Timestamp-ordered playback of a recording, paced or as fast as possible.

use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use neuresonance_core::SampleFrame;

use super::recording::{open_log, read_manifest, Manifest, RecordingError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// No waiting; frames are delivered as fast as the consumer takes them.
    Batch,
    /// Real-time multiplier: 2.0 plays a 60 s session in 30 s.
    Speed(f64),
}

impl Pacing {
    pub fn parse(s: &str) -> Option<Pacing> {
        match s.trim() {
            "batch" | "max" | "inf" => Some(Pacing::Batch),
            other => other
                .trim_end_matches('x')
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .map(Pacing::Speed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayStats {
    pub frames: u64,
    pub wall: Duration,
}

/// Sorts frames by timestamp; frames sharing a timestamp keep log order.
pub fn timestamp_order(frames: &mut [SampleFrame]) {
    frames.sort_by_key(|f| f.timestamp_us);
}

/// Delivers `frames` to `sink` in timestamp order under `pacing`. The sink
/// returns `false` to stop early.
pub fn replay_frames(
    mut frames: Vec<SampleFrame>,
    pacing: Pacing,
    mut sink: impl FnMut(SampleFrame) -> bool,
) -> ReplayStats {
    timestamp_order(&mut frames);
    let started = Instant::now();
    let origin = frames.first().map(|f| f.timestamp_us);
    let mut delivered = 0;
    for frame in frames {
        if let (Pacing::Speed(speed), Some(origin)) = (pacing, origin) {
            let due = Duration::from_secs_f64((frame.timestamp_us - origin) as f64 / 1e6 / speed);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                thread::sleep(wait);
            }
        }
        delivered += 1;
        if !sink(frame) {
            break;
        }
    }
    ReplayStats {
        frames: delivered,
        wall: started.elapsed(),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("replay halted after {delivered} frames: {source}")]
pub struct ReplayHalted {
    pub delivered: u64,
    #[source]
    pub source: RecordingError,
}

/// Replays a recording directory. A corrupt log halts playback: frames before
/// the corrupt record are still delivered and the error carries its position.
pub fn replay_dir(
    dir: impl AsRef<Path>,
    pacing: Pacing,
    sink: impl FnMut(SampleFrame) -> bool,
) -> Result<(Manifest, ReplayStats), ReplayHalted> {
    let halted = |source| ReplayHalted {
        delivered: 0,
        source,
    };
    let dir = dir.as_ref();
    let manifest = read_manifest(dir).map_err(halted)?;
    let mut frames = Vec::new();
    let mut failure = None;
    for item in open_log(dir).map_err(halted)? {
        match item {
            Ok(frame) => frames.push(frame),
            Err(e) => failure = Some(e),
        }
    }
    let stats = replay_frames(frames, pacing, sink);
    match failure {
        Some(source) => Err(ReplayHalted {
            delivered: stats.frames,
            source,
        }),
        None => Ok((manifest, stats)),
    }
}
