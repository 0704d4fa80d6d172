//! Session recording on its own thread, fed immutable values over a channel.

use std::path::Path;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam::channel::{unbounded, Sender};
use neuresonance_core::SampleFrame;

use super::IbsUpdate;
use crate::stream::recording::{
    CouplingPoint, Manifest, RecordingError, RecordingWriter, TrialMarker,
};

enum Entry {
    Frame(SampleFrame),
    Update(Arc<IbsUpdate>),
    Marker(TrialMarker),
    Coupling(CouplingPoint),
}

pub struct Recorder {
    tx: Option<Sender<Entry>>,
    worker: Option<JoinHandle<Result<Manifest, RecordingError>>>,
}

impl Recorder {
    pub fn create(dir: impl AsRef<Path>, manifest: Manifest) -> Result<Self, RecordingError> {
        let mut writer = RecordingWriter::create(dir, manifest)?;
        let (tx, rx) = unbounded::<Entry>();
        let worker = thread::Builder::new()
            .name("recorder".into())
            .spawn(move || {
                let mut first_error = None;
                for entry in rx {
                    let result = match entry {
                        Entry::Frame(f) => writer.write_frame(&f),
                        Entry::Update(u) => writer.write_update(&*u),
                        Entry::Marker(m) => writer.add_marker(m),
                        Entry::Coupling(c) => {
                            writer.add_coupling(c);
                            Ok(())
                        }
                    };
                    if let Err(e) = result {
                        log::error!("recording: {e}");
                        first_error.get_or_insert(e);
                    }
                }
                let manifest = writer.finish()?;
                first_error.map_or(Ok(manifest), Err)
            })
            .map_err(|e| RecordingError::Io {
                path: "recorder thread".into(),
                source: e,
            })?;
        Ok(Self {
            tx: Some(tx),
            worker: Some(worker),
        })
    }

    fn send(&self, entry: Entry) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(entry);
        }
    }

    pub fn frame(&self, frame: &SampleFrame) {
        self.send(Entry::Frame(frame.clone()));
    }

    pub fn update(&self, update: &Arc<IbsUpdate>) {
        self.send(Entry::Update(Arc::clone(update)));
    }

    pub fn marker(&self, marker: TrialMarker) {
        self.send(Entry::Marker(marker));
    }

    pub fn coupling(&self, point: CouplingPoint) {
        self.send(Entry::Coupling(point));
    }

    /// Flushes everything and returns the final manifest.
    pub fn finish(mut self) -> Result<Manifest, RecordingError> {
        self.tx.take();
        self.worker
            .take()
            .expect("recorder joined once")
            .join()
            .expect("recorder thread panicked")
    }
}

impl Drop for Recorder {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}
