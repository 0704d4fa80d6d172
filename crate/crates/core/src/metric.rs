//! Inter-brain synchrony mathematics.
//!
//! Circular correlation between the instantaneous phases of homologous
//! channels, pooled across channels by averaging the Fisher z transforms of
//! the `k` largest coefficients and mapping the mean back.
//!
//! ```text
//! ccorr(A, B) = Σ sin(A − Ā)·sin(B − B̄) / √(Σ sin²(A − Ā) · Σ sin²(B − B̄))
//! z(r)        = ½·ln((1 + r) / (1 − r))
//! ```

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::signal::{
    BandpassFilter, EpochWindow, FilterSpec, PhaseExtractor, SignalError, MIN_PHASE_SAMPLES,
};
use crate::MICROS_PER_SECOND;

/// Coefficients are clamped to `±(1 − FISHER_CLAMP)` before the z transform.
pub const FISHER_CLAMP: f64 = 1e-7;
/// Resultant lengths at or below this make the circular mean undefined.
pub const MIN_RESULTANT: f64 = 1e-12;
/// Number of top channel pairs pooled into the metric.
pub const DEFAULT_TOP_K: usize = 5;
/// Samples excluded at each window edge before phase statistics.
pub const DEFAULT_EDGE_TRIM: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty phase series")]
    Empty,
    #[error("circular mean undefined: resultant length {0:e}")]
    DegenerateMean(f64),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series too short: {len} samples, need {min}")]
    TooShort { len: usize, min: usize },
    #[error("zero sine-deviation energy: constant phase series")]
    DegenerateInput,
    #[error("only {available} usable channel pairs, need {required}")]
    InsufficientChannels { available: usize, required: usize },
    #[error("epochs differ in shape or sample rate")]
    ShapeMismatch,
    #[error("epoch starts differ by {0} µs, more than one sample period")]
    Misaligned(u64),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Which denominator to use in [`ccorr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CcorrForm {
    /// `√(Σ sin²(A − Ā) · Σ sin²(B − B̄))`, bounded to `[-1, 1]`.
    #[default]
    Standard,
    /// `Σ sin²(A − Ā)·sin²(B − B̄)`. Not bounded; kept only for comparison.
    SingleSum,
}

/// Argument of the mean resultant vector, in `(-π, π]`.
pub fn circular_mean(phases: &[f64]) -> Result<f64, MetricError> {
    if phases.is_empty() {
        return Err(MetricError::Empty);
    }
    let (sin_sum, cos_sum) = phases
        .iter()
        .fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    let resultant = sin_sum.hypot(cos_sum) / phases.len() as f64;
    if resultant <= MIN_RESULTANT {
        return Err(MetricError::DegenerateMean(resultant));
    }
    let mean = sin_sum.atan2(cos_sum);
    Ok(if mean <= -PI { mean + 2.0 * PI } else { mean })
}

/// Circular correlation of two phase series.
pub fn ccorr(phase_a: &[f64], phase_b: &[f64]) -> Result<f64, MetricError> {
    ccorr_with(phase_a, phase_b, CcorrForm::Standard)
}

pub fn ccorr_with(phase_a: &[f64], phase_b: &[f64], form: CcorrForm) -> Result<f64, MetricError> {
    if phase_a.len() != phase_b.len() {
        return Err(MetricError::LengthMismatch(phase_a.len(), phase_b.len()));
    }
    if phase_a.len() < MIN_PHASE_SAMPLES {
        return Err(MetricError::TooShort {
            len: phase_a.len(),
            min: MIN_PHASE_SAMPLES,
        });
    }
    let mean_a = circular_mean(phase_a)?;
    let mean_b = circular_mean(phase_b)?;

    let mut numerator = 0.0;
    let mut energy_a = 0.0;
    let mut energy_b = 0.0;
    let mut product_energy = 0.0;
    for (a, b) in phase_a.iter().zip(phase_b) {
        let sa = (a - mean_a).sin();
        let sb = (b - mean_b).sin();
        numerator += sa * sb;
        energy_a += sa * sa;
        energy_b += sb * sb;
        product_energy += sa * sa * sb * sb;
    }
    // Sine deviations at rounding level mean the series is constant.
    let floor = phase_a.len() as f64 * MIN_RESULTANT * MIN_RESULTANT;
    if energy_a <= floor || energy_b <= floor {
        return Err(MetricError::DegenerateInput);
    }
    match form {
        CcorrForm::Standard => {
            let denominator = (energy_a * energy_b).sqrt();
            if denominator.is_nan() || denominator <= 0.0 {
                return Err(MetricError::DegenerateInput);
            }
            Ok((numerator / denominator).clamp(-1.0, 1.0))
        }
        CcorrForm::SingleSum => {
            if product_energy.is_nan() || product_energy <= 0.0 {
                return Err(MetricError::DegenerateInput);
            }
            Ok(numerator / product_energy)
        }
    }
}

/// Fisher z transform, clamping `|r|` to `1 − 1e-7` so the result is finite.
pub fn fisher_z(r: f64) -> f64 {
    let limit = 1.0 - FISHER_CLAMP;
    let r = r.clamp(-limit, limit);
    0.5 * (r.ln_1p() - (-r).ln_1p())
}

pub fn inverse_fisher_z(z: f64) -> f64 {
    z.tanh()
}

/// Per-homologous-pair coefficients; `None` marks a dropped (degenerate) pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelCorrelations {
    pub values: Vec<Option<f64>>,
}

impl ChannelCorrelations {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    /// Non-finite entries become dropped pairs.
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            values: values
                .iter()
                .map(|v| v.is_finite().then_some(*v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn usable(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn dropped(&self) -> usize {
        self.len() - self.usable()
    }
}

/// Fisher-z mean of the `k` largest coefficients, mapped back to `(-1, 1)`.
///
/// Ties keep channel order, so the selection is deterministic.
pub fn pool_top_k(correlations: &ChannelCorrelations, k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::Config("k must be at least 1"));
    }
    let mut usable: Vec<f64> = correlations
        .values
        .iter()
        .filter_map(|v| v.filter(|x| x.is_finite()))
        .collect();
    if usable.len() < k {
        return Err(MetricError::InsufficientChannels {
            available: usable.len(),
            required: k,
        });
    }
    usable.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let mean_z = usable[..k].iter().map(|&r| fisher_z(r)).sum::<f64>() / k as f64;
    Ok(inverse_fisher_z(mean_z))
}

/// The synchrony value for one epoch pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IbsMetric {
    /// Pooled coefficient; `0.0` when `valid` is false.
    pub value: f64,
    pub epoch_start_us: u64,
    /// Consumers must not quantize from an invalid metric.
    pub valid: bool,
    /// The value is a carry-forward of an earlier valid epoch.
    pub held: bool,
}

impl IbsMetric {
    pub fn valid(value: f64, epoch_start_us: u64) -> Self {
        Self {
            value,
            epoch_start_us,
            valid: true,
            held: false,
        }
    }

    pub fn invalid(epoch_start_us: u64) -> Self {
        Self {
            value: 0.0,
            epoch_start_us,
            valid: false,
            held: false,
        }
    }
}

/// Optional narrow band applied after the broadband filter before phase
/// extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PhaseBand {
    #[default]
    Broadband,
    Theta,
    Alpha,
    Beta,
}

impl PhaseBand {
    pub const NARROW: [PhaseBand; 3] = [PhaseBand::Theta, PhaseBand::Alpha, PhaseBand::Beta];

    pub fn range_hz(self) -> Option<(f64, f64)> {
        match self {
            PhaseBand::Broadband => None,
            PhaseBand::Theta => Some((4.0, 8.0)),
            PhaseBand::Alpha => Some((8.0, 13.0)),
            PhaseBand::Beta => Some((13.0, 30.0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseBand::Broadband => "broadband",
            PhaseBand::Theta => "theta",
            PhaseBand::Alpha => "alpha",
            PhaseBand::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbsConfig {
    pub filter: FilterSpec,
    pub band: PhaseBand,
    pub top_k: usize,
    pub edge_trim: usize,
    pub form: CcorrForm,
}

impl IbsConfig {
    pub fn with_filter(filter: FilterSpec) -> Self {
        Self {
            filter,
            ..Self::default()
        }
    }
}

impl Default for IbsConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::realtime(),
            band: PhaseBand::Broadband,
            top_k: DEFAULT_TOP_K,
            edge_trim: DEFAULT_EDGE_TRIM,
            form: CcorrForm::Standard,
        }
    }
}

/// Filters and phase extractor prepared for one window shape, with each
/// stage callable on its own so callers can time them.
#[derive(Debug, Clone)]
pub struct IbsPipeline {
    config: IbsConfig,
    sample_rate: f64,
    window_len: usize,
    broadband: BandpassFilter,
    narrow: Option<BandpassFilter>,
    extractor: PhaseExtractor,
}

impl IbsPipeline {
    pub fn new(config: IbsConfig, sample_rate: f64, window_len: usize) -> Result<Self, MetricError> {
        if config.top_k == 0 {
            return Err(MetricError::Config("top_k must be at least 1"));
        }
        if window_len < 2 * config.edge_trim + MIN_PHASE_SAMPLES {
            return Err(MetricError::TooShort {
                len: window_len,
                min: 2 * config.edge_trim + MIN_PHASE_SAMPLES,
            });
        }
        let broadband = BandpassFilter::design(config.filter, sample_rate)?;
        let narrow = match config.band.range_hz() {
            Some((low, high)) => Some(BandpassFilter::design(
                FilterSpec {
                    low_cut: low,
                    high_cut: high,
                    ..config.filter
                },
                sample_rate,
            )?),
            None => None,
        };
        Ok(Self {
            config,
            sample_rate,
            window_len,
            broadband,
            narrow,
            extractor: PhaseExtractor::new(window_len),
        })
    }

    pub fn config(&self) -> &IbsConfig {
        &self.config
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn check_pair(&self, a: &EpochWindow, b: &EpochWindow) -> Result<(), MetricError> {
        let same_shape = a.channel_count() == b.channel_count()
            && a.sample_count() == b.sample_count()
            && a.sample_count() == self.window_len
            && a.data.iter().chain(&b.data).all(|c| c.len() == self.window_len)
            && a.sample_rate == b.sample_rate
            && a.sample_rate == self.sample_rate;
        if !same_shape {
            return Err(MetricError::ShapeMismatch);
        }
        let skew = a.start_timestamp_us.abs_diff(b.start_timestamp_us);
        if skew as f64 >= MICROS_PER_SECOND / self.sample_rate {
            return Err(MetricError::Misaligned(skew));
        }
        Ok(())
    }

    /// Band-pass every channel.
    pub fn filter(&self, epoch: &EpochWindow) -> Result<Vec<Vec<f64>>, MetricError> {
        epoch
            .data
            .iter()
            .map(|channel| {
                let broad = self.broadband.apply(channel)?;
                Ok(match &self.narrow {
                    Some(narrow) => narrow.apply(&broad)?,
                    None => broad,
                })
            })
            .collect()
    }

    /// Edge-trimmed phases per channel; `None` where the phase is undefined.
    pub fn phases(&self, filtered: &[Vec<f64>]) -> Vec<Option<Vec<f64>>> {
        let trim = self.config.edge_trim;
        filtered
            .iter()
            .map(|channel| {
                self.extractor
                    .phase(channel)
                    .ok()
                    .map(|p| p[trim..p.len() - trim].to_vec())
            })
            .collect()
    }

    /// CCorr per homologous pair; degenerate pairs are dropped.
    pub fn correlations(
        &self,
        phases_a: &[Option<Vec<f64>>],
        phases_b: &[Option<Vec<f64>>],
    ) -> ChannelCorrelations {
        ChannelCorrelations::new(
            phases_a
                .iter()
                .zip(phases_b)
                .map(|pair| match pair {
                    (Some(a), Some(b)) => ccorr_with(a, b, self.config.form)
                        .ok()
                        .filter(|r| r.is_finite()),
                    _ => None,
                })
                .collect(),
        )
    }

    /// Pools the correlations into a metric; too few usable pairs yields an
    /// invalid metric rather than an error.
    pub fn pool(&self, correlations: &ChannelCorrelations, epoch_start_us: u64) -> IbsMetric {
        match pool_top_k(correlations, self.config.top_k) {
            Ok(value) => IbsMetric::valid(value, epoch_start_us),
            Err(_) => IbsMetric::invalid(epoch_start_us),
        }
    }

    pub fn compute(&self, a: &EpochWindow, b: &EpochWindow) -> Result<IbsMetric, MetricError> {
        self.check_pair(a, b)?;
        let phases_a = self.phases(&self.filter(a)?);
        let phases_b = self.phases(&self.filter(b)?);
        let correlations = self.correlations(&phases_a, &phases_b);
        Ok(self.pool(&correlations, a.start_timestamp_us.min(b.start_timestamp_us)))
    }
}

/// End-to-end metric for one aligned epoch pair with default pooling.
pub fn compute_ibs(
    epoch_a: &EpochWindow,
    epoch_b: &EpochWindow,
    spec: FilterSpec,
) -> Result<IbsMetric, MetricError> {
    IbsPipeline::new(IbsConfig::with_filter(spec), epoch_a.sample_rate, epoch_a.sample_count())?
        .compute(epoch_a, epoch_b)
}
