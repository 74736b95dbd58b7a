//! Run configuration: one TOML table per pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::PiecewiseConstant;
use crate::nhpp::TrainConfig;
use crate::planner::{KappaPolicy, Trigger, DEFAULT_PLANNING_INTERVAL, DEFAULT_SAMPLES};
use crate::trace::{daily_peak_intensity, ServiceTimeModel, TraceSchema};

/// A closed-form arrival rate for synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticIntensity {
    Constant { rate: f64 },
    /// mean + amplitude·sin(2πt/period)
    Sinusoid { mean: f64, amplitude: f64, period: f64 },
    /// 4¹⁰u¹⁰(1−u)¹⁰ + 0.1 with u = (t mod period)/period
    DailyPeak { period: f64 },
}

impl SyntheticIntensity {
    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { rate } => rate,
            Self::Sinusoid { mean, amplitude, period } => mean + amplitude * (2.0 * std::f64::consts::PI * t / period).sin(),
            Self::DailyPeak { period } => daily_peak_intensity(t, period),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { rate } => rate >= 0.0 && rate.is_finite(),
            Self::Sinusoid { mean, amplitude, period } => amplitude.abs() <= mean && period > 0.0 && mean.is_finite(),
            Self::DailyPeak { period } => period > 0.0 && period.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic intensity {self:?}")))
        }
    }

    /// Bin averages over `[start, start + horizon)` on bins of width `step`.
    pub fn tabulate(&self, start: f64, horizon: f64, step: f64) -> Result<PiecewiseConstant> {
        self.validate()?;
        let n = (horizon / step).ceil().max(1.0) as usize;
        PiecewiseConstant::from_fn_bins(|t| self.rate(t).max(0.0), start, step, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTrace {
    pub intensity: SyntheticIntensity,
    /// Seconds of trace to generate from t = 0.
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    /// CSV trace. With `synthetic` set, the generated trace is written here, under the output
    /// directory.
    pub path: Option<PathBuf>,
    #[serde(default = "default_arrival_column")]
    pub arrival_column: String,
    #[serde(default)]
    pub processing_column: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticTrace>,
}

fn default_arrival_column() -> String {
    TraceSchema::default().arrival
}

impl TraceSection {
    pub fn schema(&self) -> TraceSchema {
        TraceSchema {
            arrival: self.arrival_column.clone(),
            processing: self.processing_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateSection {
    /// Bin width Δt in seconds.
    pub dt: f64,
    /// Largest period searched, in bins; defaults to one day.
    #[serde(default)]
    pub max_period: Option<usize>,
    /// Skip detection and use this period (bins).
    #[serde(default)]
    pub force_period: Option<usize>,
}

// no deny_unknown_fields here: serde does not support it together with flatten
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    /// Fraction of the trace span used for training; the rest is replayed.
    pub split: f64,
    #[serde(flatten)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub pending: ServiceTimeModel,
    pub processing: ServiceTimeModel,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_interval")]
    pub planning_interval: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub trigger: Trigger,
    #[serde(default)]
    pub kappa_policy: KappaPolicy,
    /// Extra prediction beyond the replay window, seconds.
    #[serde(default = "default_margin")]
    pub horizon_margin: f64,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_interval() -> f64 {
    DEFAULT_PLANNING_INTERVAL
}
fn default_m() -> usize {
    1
}
fn default_margin() -> f64 {
    3600.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub hp_alphas: Vec<f64>,
    /// RT thresholds d, seconds.
    #[serde(default)]
    pub rt_targets: Vec<f64>,
    /// Per-instance budgets B, seconds.
    #[serde(default)]
    pub cost_budgets: Vec<f64>,
    #[serde(default)]
    pub pool_sizes: Vec<usize>,
    #[serde(default)]
    pub adaptive_multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Concurrent sweep points; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    pub trace: TraceSection,
    pub aggregate: AggregateSection,
    pub train: TrainSection,
    pub scaling: ScalingSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        match (&self.trace.path, &self.trace.synthetic) {
            (None, _) => return cfg("[trace] path is required".into()),
            (Some(p), Some(_)) if p.is_absolute() => {
                return cfg("a synthetic trace path must be relative to the output directory".into())
            }
            _ => {}
        }
        if let Some(s) = &self.trace.synthetic {
            s.intensity.validate()?;
            if !(s.horizon > 0.0) {
                return cfg(format!("synthetic horizon must be positive, got {}", s.horizon));
            }
        }
        if !(self.aggregate.dt > 0.0 && self.aggregate.dt.is_finite()) {
            return cfg(format!("dt must be positive, got {}", self.aggregate.dt));
        }
        if matches!(self.aggregate.max_period, Some(p) if p < 2) || matches!(self.aggregate.force_period, Some(p) if p < 2) {
            return cfg("periods must be at least 2 bins".into());
        }
        if !(self.train.split > 0.0 && self.train.split < 1.0) {
            return cfg(format!("train split must lie in (0, 1), got {}", self.train.split));
        }
        self.train.config.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.scaling.pending.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.scaling.processing.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.scaling.samples == 0 || self.scaling.m == 0 || !(self.scaling.planning_interval > 0.0) {
            return cfg("samples, m and planning_interval must be positive".into());
        }
        if !(self.scaling.horizon_margin >= 0.0) {
            return cfg("horizon_margin must be non-negative".into());
        }
        if self.sweep.hp_alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return cfg("hp_alphas must lie in (0, 1)".into());
        }
        if self.sweep.adaptive_multipliers.iter().any(|m| !(*m >= 0.0)) {
            return cfg("adaptive multipliers must be non-negative".into());
        }
        Ok(())
    }
}
