//! Session recordings: a directory holding `manifest.json`, the binary frame
//! log `frames.nrlog` and the published updates `updates.jsonl`.
//!
//! The frame log starts with a 16-byte header (`"NRLOG1"`, u16 version,
//! u16 stream count, six reserved zero bytes) followed by records of a
//! little-endian u32 length and one wire frame.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use neuresonance_core::{Participant, SampleFrame};
use serde::{Deserialize, Serialize};

use super::wire::{decode_frame, encode_frame_into, frame_len, FrameError};
use crate::session::Condition;

pub const LOG_MAGIC: [u8; 6] = *b"NRLOG1";
pub const LOG_VERSION: u16 = 1;
pub const LOG_HEADER_LEN: usize = 16;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.nrlog";
pub const UPDATES_FILE: &str = "updates.jsonl";

pub const MANIFEST_FORMAT: &str = "neuresonance-recording";

#[derive(Debug, thiserror::Error)]
pub enum RecordingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("corrupt frame log at byte {position}: {reason}")]
    Corrupt { position: u64, reason: String },
    #[error("cannot encode frame: {0}")]
    Encode(#[from] FrameError),
}

impl RecordingError {
    fn io(path: &Path, source: io::Error) -> Self {
        RecordingError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Eeg,
    Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub stream_id: u8,
    pub kind: StreamKind,
    pub participant: Participant,
    pub channel_count: u8,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerKind {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMarker {
    pub timestamp_us: u64,
    pub trial_id: u32,
    pub kind: MarkerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

/// Coupling of a synthetic source from `timestamp_us` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    pub timestamp_us: u64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u16,
    pub session_id: String,
    pub streams: Vec<StreamInfo>,
    /// Snapshot of the configuration that produced the recording.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub markers: Vec<TrialMarker>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupling_trace: Vec<CouplingPoint>,
}

/// A trial reconstructed from a start/stop marker pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSpan {
    pub trial_id: u32,
    pub condition: Condition,
    pub start_us: u64,
    pub stop_us: u64,
}

impl Manifest {
    pub fn new(session_id: impl Into<String>, streams: Vec<StreamInfo>) -> Self {
        Self {
            format: MANIFEST_FORMAT.to_owned(),
            version: LOG_VERSION,
            session_id: session_id.into(),
            streams,
            config: serde_json::Value::Null,
            markers: Vec::new(),
            coupling_trace: Vec::new(),
        }
    }

    pub fn stream(&self, stream_id: u8) -> Option<&StreamInfo> {
        self.streams.iter().find(|s| s.stream_id == stream_id)
    }

    pub fn stream_for(&self, kind: StreamKind, participant: Participant) -> Option<&StreamInfo> {
        self.streams
            .iter()
            .find(|s| s.kind == kind && s.participant == participant)
    }

    /// Pairs markers into trials. Unpaired or inconsistent markers produce a
    /// note instead of a trial.
    pub fn trials(&self) -> (Vec<TrialSpan>, Vec<String>) {
        let mut trials = Vec::new();
        let mut notes = Vec::new();
        let mut open: Option<(&TrialMarker, Condition)> = None;
        for m in &self.markers {
            match m.kind {
                MarkerKind::Start => {
                    if let Some((prev, _)) = open {
                        notes.push(format!("trial {} has no stop marker; skipped", prev.trial_id));
                    }
                    open = match m.condition {
                        Some(c) => Some((m, c)),
                        None => {
                            notes.push(format!("trial {} start has no condition; skipped", m.trial_id));
                            None
                        }
                    };
                }
                MarkerKind::Stop => match open.take() {
                    Some((start, condition)) if start.trial_id == m.trial_id => {
                        trials.push(TrialSpan {
                            trial_id: m.trial_id,
                            condition,
                            start_us: start.timestamp_us,
                            stop_us: m.timestamp_us.max(start.timestamp_us),
                        });
                    }
                    Some((start, _)) => notes.push(format!(
                        "trial {} stopped by a marker for trial {}; skipped",
                        start.trial_id, m.trial_id
                    )),
                    None => notes.push(format!("trial {} has no start marker; skipped", m.trial_id)),
                },
            }
        }
        if let Some((start, _)) = open {
            notes.push(format!("trial {} has no stop marker; skipped", start.trial_id));
        }
        (trials, notes)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, RecordingError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| RecordingError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| RecordingError::Manifest { path, source })
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), RecordingError> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| RecordingError::io(&path, e))
}

fn log_header(stream_count: u16) -> [u8; LOG_HEADER_LEN] {
    let mut h = [0u8; LOG_HEADER_LEN];
    h[..6].copy_from_slice(&LOG_MAGIC);
    h[6..8].copy_from_slice(&LOG_VERSION.to_le_bytes());
    h[8..10].copy_from_slice(&stream_count.to_le_bytes());
    h
}

/// Appends length-prefixed frames after the log header.
pub struct LogWriter<W: Write> {
    inner: W,
    scratch: Vec<u8>,
    frames: u64,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut inner: W, stream_count: u16) -> io::Result<Self> {
        inner.write_all(&log_header(stream_count))?;
        Ok(Self {
            inner,
            scratch: Vec::with_capacity(frame_len(14) + 4),
            frames: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &SampleFrame) -> Result<(), RecordingError> {
        self.scratch.clear();
        self.scratch.extend_from_slice(&[0; 4]);
        encode_frame_into(frame, &mut self.scratch)?;
        let len = (self.scratch.len() - 4) as u32;
        self.scratch[..4].copy_from_slice(&len.to_le_bytes());
        self.inner
            .write_all(&self.scratch)
            .map_err(|e| RecordingError::io(Path::new(FRAMES_FILE), e))?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Iterates the frames of a log; a corrupt record ends iteration with an
/// error carrying its byte position.
pub struct LogReader<R: Read> {
    inner: R,
    position: u64,
    stream_count: u16,
    failed: bool,
    buf: Vec<u8>,
}

impl<R: Read> LogReader<R> {
    pub fn new(mut inner: R) -> Result<Self, RecordingError> {
        let mut header = [0u8; LOG_HEADER_LEN];
        let got = fill(&mut inner, &mut header)?;
        let corrupt = |reason: &str| RecordingError::Corrupt {
            position: 0,
            reason: reason.to_owned(),
        };
        if got < LOG_HEADER_LEN {
            return Err(corrupt("header truncated"));
        }
        if header[..6] != LOG_MAGIC {
            return Err(corrupt("bad log magic"));
        }
        let version = u16::from_le_bytes([header[6], header[7]]);
        if version != LOG_VERSION {
            return Err(corrupt(&format!("unsupported log version {version}")));
        }
        Ok(Self {
            inner,
            position: LOG_HEADER_LEN as u64,
            stream_count: u16::from_le_bytes([header[8], header[9]]),
            failed: false,
            buf: Vec::new(),
        })
    }

    pub fn stream_count(&self) -> u16 {
        self.stream_count
    }

    /// Byte offset of the next record.
    pub fn position(&self) -> u64 {
        self.position
    }

    fn next_record(&mut self) -> Result<Option<SampleFrame>, RecordingError> {
        let start = self.position;
        let mut len_bytes = [0u8; 4];
        match fill(&mut self.inner, &mut len_bytes)? {
            0 => return Ok(None),
            4 => {}
            _ => {
                return Err(RecordingError::Corrupt {
                    position: start,
                    reason: "record length truncated".into(),
                })
            }
        }
        let len = u32::from_le_bytes(len_bytes) as usize;
        if len > frame_len(255) {
            return Err(RecordingError::Corrupt {
                position: start,
                reason: format!("record length {len} exceeds the largest frame"),
            });
        }
        self.buf.resize(len, 0);
        let got = fill(&mut self.inner, &mut self.buf)?;
        if got < len {
            return Err(RecordingError::Corrupt {
                position: start + 4 + got as u64,
                reason: format!("record of {len} bytes truncated after {got}"),
            });
        }
        let frame = decode_frame(&self.buf).map_err(|e| RecordingError::Corrupt {
            position: start + 4 + e.offset() as u64,
            reason: e.to_string(),
        })?;
        self.position = start + 4 + len as u64;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for LogReader<R> {
    type Item = Result<SampleFrame, RecordingError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(frame) => frame.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

fn fill<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<usize, RecordingError> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(RecordingError::io(Path::new(FRAMES_FILE), e)),
        }
    }
    Ok(filled)
}

/// Writes a recording directory incrementally while a session runs.
pub struct RecordingWriter {
    dir: PathBuf,
    manifest: Manifest,
    frames: LogWriter<BufWriter<File>>,
    updates: BufWriter<File>,
}

impl RecordingWriter {
    pub fn create(dir: impl AsRef<Path>, manifest: Manifest) -> Result<Self, RecordingError> {
        let dir = dir.as_ref().to_owned();
        fs::create_dir_all(&dir).map_err(|e| RecordingError::io(&dir, e))?;
        let frames_path = dir.join(FRAMES_FILE);
        let file = File::create(&frames_path).map_err(|e| RecordingError::io(&frames_path, e))?;
        let frames = LogWriter::new(BufWriter::new(file), manifest.streams.len() as u16)
            .map_err(|e| RecordingError::io(&frames_path, e))?;
        let updates_path = dir.join(UPDATES_FILE);
        let updates = BufWriter::new(
            File::create(&updates_path).map_err(|e| RecordingError::io(&updates_path, e))?,
        );
        write_manifest(&dir, &manifest)?;
        Ok(Self {
            dir,
            manifest,
            frames,
            updates,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn write_frame(&mut self, frame: &SampleFrame) -> Result<(), RecordingError> {
        self.frames.write_frame(frame)
    }

    /// Appends one JSON line to `updates.jsonl`.
    pub fn write_update<T: Serialize>(&mut self, update: &T) -> Result<(), RecordingError> {
        let path = self.dir.join(UPDATES_FILE);
        serde_json::to_writer(&mut self.updates, update)
            .map_err(|e| RecordingError::io(&path, e.into()))?;
        self.updates
            .write_all(b"\n")
            .map_err(|e| RecordingError::io(&path, e))
    }

    /// Adds a marker and rewrites the manifest so it survives a crash.
    pub fn add_marker(&mut self, marker: TrialMarker) -> Result<(), RecordingError> {
        self.manifest.markers.push(marker);
        write_manifest(&self.dir, &self.manifest)
    }

    pub fn add_coupling(&mut self, point: CouplingPoint) {
        self.manifest.coupling_trace.push(point);
    }

    pub fn finish(self) -> Result<Manifest, RecordingError> {
        let frames_path = self.dir.join(FRAMES_FILE);
        self.frames
            .into_inner()
            .and_then(|mut w| w.flush())
            .map_err(|e| RecordingError::io(&frames_path, e))?;
        let mut updates = self.updates;
        updates
            .flush()
            .map_err(|e| RecordingError::io(&self.dir.join(UPDATES_FILE), e))?;
        write_manifest(&self.dir, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// A recording held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub manifest: Manifest,
    pub frames: Vec<SampleFrame>,
}

impl Recording {
    /// Loads the manifest and every frame; fails on the first corrupt record.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, RecordingError> {
        let dir = dir.as_ref();
        let manifest = read_manifest(dir)?;
        let frames = open_log(dir)?.collect::<Result<Vec<_>, _>>()?;
        Ok(Self { manifest, frames })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), RecordingError> {
        let mut writer = RecordingWriter::create(dir, self.manifest.clone())?;
        for frame in &self.frames {
            writer.write_frame(frame)?;
        }
        writer.finish().map(drop)
    }

    pub fn stream_frames(&self, stream_id: u8) -> impl Iterator<Item = &SampleFrame> {
        self.frames.iter().filter(move |f| f.stream_id == stream_id)
    }
}

pub fn open_log(dir: &Path) -> Result<LogReader<BufReader<File>>, RecordingError> {
    let path = dir.join(FRAMES_FILE);
    let file = File::open(&path).map_err(|e| RecordingError::io(&path, e))?;
    LogReader::new(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker(ts: u64, id: u32, kind: MarkerKind, c: Option<Condition>) -> TrialMarker {
        TrialMarker {
            timestamp_us: ts,
            trial_id: id,
            kind,
            condition: c,
        }
    }

    #[test]
    fn log_round_trip_in_memory() {
        let mut w = LogWriter::new(Vec::new(), 1).unwrap();
        for t in 0..5u64 {
            w.write_frame(&SampleFrame::new(0, t, vec![t as f32; 3])).unwrap();
        }
        let bytes = w.into_inner().unwrap();
        assert_eq!(&bytes[..6], b"NRLOG1");
        assert_eq!(bytes.len(), 16 + 5 * (4 + 24));
        let frames: Vec<_> = LogReader::new(&bytes[..]).unwrap().map(Result::unwrap).collect();
        assert_eq!(frames.len(), 5);
        assert_eq!(frames[4].channels, vec![4.0; 3]);
    }

    #[test]
    fn corruption_reports_position() {
        let mut w = LogWriter::new(Vec::new(), 1).unwrap();
        for t in 0..3u64 {
            w.write_frame(&SampleFrame::new(0, t, vec![1.0])).unwrap();
        }
        let mut bytes = w.into_inner().unwrap();
        // second record starts at 16 + 20; its magic sits 4 bytes later
        bytes[16 + 20 + 4] = b'X';
        let items: Vec<_> = LogReader::new(&bytes[..]).unwrap().collect();
        assert_eq!(items.len(), 2);
        match &items[1] {
            Err(RecordingError::Corrupt { position, .. }) => assert_eq!(*position, 40),
            other => panic!("{other:?}"),
        }
        assert!(LogReader::new(&b"NRLOG2\x01\x00"[..]).is_err());
    }

    #[test]
    fn trials_from_markers() {
        let mut m = Manifest::new("s", vec![]);
        m.markers = vec![
            marker(0, 1, MarkerKind::Start, Some(Condition::Visual)),
            marker(30, 1, MarkerKind::Stop, None),
            marker(40, 2, MarkerKind::Stop, None),
            marker(50, 3, MarkerKind::Start, Some(Condition::Haptic)),
        ];
        let (trials, notes) = m.trials();
        assert_eq!(trials.len(), 1);
        assert_eq!((trials[0].start_us, trials[0].stop_us), (0, 30));
        assert_eq!(notes.len(), 2);
    }
}
