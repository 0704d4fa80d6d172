//! Real-time inter-brain synchrony engine: stream ingestion, the windowed
//! metric pipeline, feedback dispatch, session control, recording and
//! offline analysis.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod dispatch;
pub mod engine;
pub mod session;
pub mod stream;

pub use neuresonance_core as core;
