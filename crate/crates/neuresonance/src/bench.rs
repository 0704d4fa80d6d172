//! Latency suite: drives the engine over synthetic data and checks the
//! per-update compute and motion-classification budgets.

use serde::Serialize;

use crate::config::EngineConfig;
use crate::engine::latency::{percentiles, LatencyReport, Percentiles};
use crate::engine::runner::{run, RunError, RunOptions, Source};
use crate::stream::synth::SynthConfig;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("no update reached the metric computation")]
    NoUpdates,
}

pub const MIN_UPDATES: usize = 200;
pub const MOTION_BUDGET_MS: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub updates: usize,
    /// Filter through pool, both participants, per update.
    pub compute: Percentiles,
    pub motion: Percentiles,
    pub total: Percentiles,
    pub budget_ms: f64,
    pub motion_budget_ms: f64,
    pub stages: LatencyReport,
}

impl BenchReport {
    pub fn compute_within_budget(&self) -> bool {
        self.compute.p95 <= self.budget_ms
    }

    pub fn motion_within_budget(&self) -> bool {
        self.motion.p95 <= self.motion_budget_ms
    }

    pub fn passed(&self) -> bool {
        self.updates >= MIN_UPDATES && self.compute_within_budget() && self.motion_within_budget()
    }
}

/// Seconds of synthetic data that yield `updates` hops.
pub fn duration_for(updates: usize, config: &EngineConfig) -> f64 {
    config.window_s + config.hop_s * (updates.max(1) - 1) as f64 + 0.5
}

/// Runs at least `updates` updates through the engine in batch mode. No
/// feedback endpoints are contacted.
pub fn run_bench(mut config: EngineConfig, updates: usize, seed: u64) -> Result<BenchReport, BenchError> {
    config.endpoints = Default::default();
    let synth = SynthConfig {
        duration_s: duration_for(updates, &config),
        sample_rate: config.sample_rate,
        channel_count: config.channel_count,
        motion_rate: config.motion.sample_rate,
        coupling: 0.5,
        seed,
        ..Default::default()
    };
    let summary = run(config.clone(), Source::Synth(synth), RunOptions::default())?;
    let computed: Vec<_> = summary
        .updates
        .iter()
        .filter(|u| u.stages.compute() > 0.0)
        .collect();
    let series = |f: &dyn Fn(&crate::engine::StageTimes) -> f64| {
        let v: Vec<f64> = computed.iter().map(|u| f(&u.stages)).collect();
        percentiles(&v)
    };
    Ok(BenchReport {
        updates: computed.len(),
        compute: series(&|s| s.compute()).ok_or(BenchError::NoUpdates)?,
        motion: series(&|s| s.motion).ok_or(BenchError::NoUpdates)?,
        total: series(&|s| s.total()).ok_or(BenchError::NoUpdates)?,
        budget_ms: config.budget_ms,
        motion_budget_ms: MOTION_BUDGET_MS,
        stages: summary.latency.ok_or(BenchError::NoUpdates)?,
    })
}
