//! Per-stage timing of the update path.

use std::time::Duration;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter,
    Phase,
    Ccorr,
    Pool,
    /// Motion velocity estimation and classification for both participants.
    Motion,
    Gate,
    /// Quantize, map, and hand the update to every sink.
    Dispatch,
    Total,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Filter,
        Stage::Phase,
        Stage::Ccorr,
        Stage::Pool,
        Stage::Motion,
        Stage::Gate,
        Stage::Dispatch,
        Stage::Total,
    ];

    /// The signal-to-metric stages: filter through pool.
    pub const COMPUTE: [Stage; 4] = [Stage::Filter, Stage::Phase, Stage::Ccorr, Stage::Pool];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Phase => "phase",
            Stage::Ccorr => "ccorr",
            Stage::Pool => "pool",
            Stage::Motion => "motion",
            Stage::Gate => "gate",
            Stage::Dispatch => "dispatch",
            Stage::Total => "total",
        }
    }

    fn index(self) -> usize {
        Stage::ALL.iter().position(|&s| s == self).expect("listed stage")
    }
}

/// Stage durations of one update, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub filter: f64,
    pub phase: f64,
    pub ccorr: f64,
    pub pool: f64,
    pub motion: f64,
    pub gate: f64,
    pub dispatch: f64,
}

impl StageTimes {
    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Filter => self.filter,
            Stage::Phase => self.phase,
            Stage::Ccorr => self.ccorr,
            Stage::Pool => self.pool,
            Stage::Motion => self.motion,
            Stage::Gate => self.gate,
            Stage::Dispatch => self.dispatch,
            Stage::Total => self.total(),
        }
    }

    pub fn set(&mut self, stage: Stage, elapsed: Duration) {
        let ms = elapsed.as_secs_f64() * 1e3;
        match stage {
            Stage::Filter => self.filter = ms,
            Stage::Phase => self.phase = ms,
            Stage::Ccorr => self.ccorr = ms,
            Stage::Pool => self.pool = ms,
            Stage::Motion => self.motion = ms,
            Stage::Gate => self.gate = ms,
            Stage::Dispatch => self.dispatch = ms,
            Stage::Total => {}
        }
    }

    /// Filter through pool: the synchrony computation itself.
    pub fn compute(&self) -> f64 {
        self.filter + self.phase + self.ccorr + self.pool
    }

    pub fn total(&self) -> f64 {
        self.compute() + self.motion + self.gate + self.dispatch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub count: usize,
}

/// Nearest-rank percentiles; `None` for an empty sample.
pub fn percentiles(values: &[f64]) -> Option<Percentiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = |p: f64| {
        let r = (p * sorted.len() as f64).ceil() as usize;
        sorted[r.clamp(1, sorted.len()) - 1]
    };
    Some(Percentiles {
        p50: rank(0.50),
        p95: rank(0.95),
        max: sorted[sorted.len() - 1],
        count: sorted.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub updates: usize,
    pub stages: Vec<(Stage, Percentiles)>,
}

impl LatencyReport {
    pub fn stage(&self, stage: Stage) -> Option<&Percentiles> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, p)| p)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LatencyRecorder {
    samples: [Vec<f64>; 8],
}

impl LatencyRecorder {
    pub fn record(&mut self, times: &StageTimes) {
        for stage in Stage::ALL {
            self.samples[stage.index()].push(times.get(stage));
        }
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn reset(&mut self) {
        self.samples.iter_mut().for_each(Vec::clear);
    }

    /// `None` until at least one update has been recorded.
    pub fn report(&self) -> Option<LatencyReport> {
        if self.is_empty() {
            return None;
        }
        Some(LatencyReport {
            updates: self.len(),
            stages: Stage::ALL
                .iter()
                .map(|&s| (s, percentiles(&self.samples[s.index()]).expect("non-empty")))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = percentiles(&v).unwrap();
        assert_eq!((p.p50, p.p95, p.max), (50.0, 95.0, 100.0));
        assert_eq!(percentiles(&[7.0]).unwrap().p95, 7.0);
        assert!(percentiles(&[]).is_none());
    }

    #[test]
    fn empty_then_reset() {
        let mut r = LatencyRecorder::default();
        assert!(r.report().is_none());
        let mut t = StageTimes::default();
        t.set(Stage::Filter, Duration::from_millis(2));
        t.set(Stage::Dispatch, Duration::from_millis(1));
        r.record(&t);
        let rep = r.report().unwrap();
        assert_eq!(rep.stage(Stage::Total).unwrap().max, 3.0);
        r.reset();
        assert!(r.report().is_none());
    }
}
