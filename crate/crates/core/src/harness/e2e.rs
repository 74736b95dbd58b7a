//! The full pipeline: trace, aggregation, period detection, training, prediction and sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::sweep::{run_sweep, write_sweep_csv, SweepKind, SweepRow, SweepSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::intensity::PiecewiseConstant;
use crate::nhpp::{predict_intensity_capped, train, ConvergenceReport, IntensityModel, DEFAULT_HORIZON_CAP};
use crate::periodicity::{detect_period, PeriodInfo};
use crate::planner::{Objective, PlannerConfig};
use crate::trace::{aggregate_qps_window, generate_nhpp_trace, ingest_trace, save_trace, QpsSeries, QueryEvent};

/// Aggregated trace with the train/test boundary on a bin edge.
#[derive(Debug, Clone)]
pub struct SplitSeries {
    pub series: QpsSeries,
    pub train: QpsSeries,
    /// First bin of the test part.
    pub split_bin: usize,
    pub split_time: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub kind: SweepKind,
    pub file: String,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub queries: usize,
    pub test_queries: usize,
    pub dt: f64,
    pub bins: usize,
    pub split_time: f64,
    pub end: f64,
    pub period: PeriodInfo,
    pub training: ConvergenceReport,
    pub sweeps: Vec<SweepSummary>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))
}

/// Loads the configured trace. A synthetic trace is generated and written to
/// `out_dir/<path>`; otherwise `path` is resolved against `base_dir`.
pub fn load_events(config: &RunConfig, base_dir: &Path, out_dir: &Path) -> Result<(Vec<QueryEvent>, PathBuf)> {
    let rel = config
        .trace
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("[trace] path is required".into()))?;
    match &config.trace.synthetic {
        Some(s) => {
            let step = config.aggregate.dt.min(60.0);
            let lam = s.intensity.tabulate(0.0, s.horizon, step)?;
            let events = generate_nhpp_trace(&lam, 0.0, s.horizon, config.seed)?;
            let path = out_dir.join(rel);
            save_trace(&path, &events)?;
            Ok((events, path))
        }
        None => {
            let path = base_dir.join(rel);
            Ok((ingest_trace(&path, &config.trace.schema())?, path))
        }
    }
}

/// Bins `events` from the floor-aligned first arrival and splits at a bin edge, so that the
/// training part holds `split` of the bins.
pub fn aggregate_and_split(events: &[QueryEvent], dt: f64, split: f64) -> Result<SplitSeries> {
    let first = events.first().ok_or(Error::EmptyTrace)?.arrival;
    let end = events.last().map_or(first, |e| e.arrival);
    let start = (first / dt).floor() * dt;
    let bins = ((end - start) / dt).floor() as usize + 1;
    if bins < 4 {
        return Err(Error::SeriesTooShort { need: 4, got: bins });
    }
    let series = aggregate_qps_window(events, dt, start, bins)?;
    let split_bin = ((bins as f64 * split).round() as usize).clamp(2, bins - 1);
    let train = series.slice(0, split_bin)?;
    Ok(SplitSeries {
        split_time: start + split_bin as f64 * dt,
        series,
        train,
        split_bin,
        end,
    })
}

/// Configured period, or one detected on the training part with the search limited to a day.
pub fn resolve_period(config: &RunConfig, train: &QpsSeries) -> Result<PeriodInfo> {
    if let Some(p) = config.aggregate.force_period {
        return Ok(PeriodInfo::forced(p));
    }
    let day = (86400.0 / config.aggregate.dt).round().max(2.0) as usize;
    let max_period = config.aggregate.max_period.unwrap_or(day).min(train.len().saturating_sub(1) / 2).max(2);
    detect_period(train, max_period)
}

/// Predicted intensity over the test part plus the configured margin. The extrapolation cap is
/// raised to cover the whole test part.
pub fn predict_test_intensity(model: &IntensityModel, config: &RunConfig, split: &SplitSeries) -> Result<PiecewiseConstant> {
    let horizon = (split.end - split.split_time).max(config.aggregate.dt) + config.scaling.horizon_margin;
    predict_intensity_capped(model, split.split_time, horizon, horizon.max(DEFAULT_HORIZON_CAP))
}

pub fn planner_config(config: &RunConfig) -> PlannerConfig {
    let s = &config.scaling;
    PlannerConfig {
        samples: s.samples,
        planning_interval: s.planning_interval,
        m: s.m,
        trigger: s.trigger,
        kappa_policy: s.kappa_policy,
        seed: config.seed,
        ..PlannerConfig::new(Objective::Hp { alpha: 0.5 }, s.pending.clone(), s.processing.mean())
    }
}

/// Grids of the sweeps that have a non-empty grid, in a fixed order.
pub fn sweep_grids(config: &RunConfig) -> Vec<(SweepKind, Vec<f64>)> {
    let s = &config.sweep;
    [
        (SweepKind::PlannedHp, s.hp_alphas.clone()),
        (SweepKind::PlannedRt, s.rt_targets.clone()),
        (SweepKind::PlannedCost, s.cost_budgets.clone()),
        (SweepKind::BackupPool, s.pool_sizes.iter().map(|&b| b as f64).collect()),
        (SweepKind::AdaptiveBackupPool, s.adaptive_multipliers.clone()),
    ]
    .into_iter()
    .filter(|(_, g)| !g.is_empty())
    .collect()
}

/// Runs every stage and writes the artifacts to `out_dir`. Reruns with the same config produce
/// byte-identical files.
pub fn run_e2e(config: &RunConfig, base_dir: &Path, out_dir: &Path, exec: Execution) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut log = String::new();
    let mut note = |line: String| {
        log::info!("{line}");
        log.push_str(&line);
        log.push('\n');
    };

    // every default, resolved; the worker count does not affect results
    let shown_config = RunConfig { workers: 0, ..config.clone() };
    note(format!("config:\n{}", shown_config.to_toml()?.trim_end()));
    let (events, _) = load_events(config, base_dir, out_dir).map_err(|e| e.at_stage("trace"))?;
    // the configured path, so the log does not depend on where the run happens
    let shown = config.trace.path.as_deref().unwrap_or(Path::new("")).display();
    note(format!("trace: {} queries from {shown}", events.len()));

    let split = aggregate_and_split(&events, config.aggregate.dt, config.train.split).map_err(|e| e.at_stage("aggregate"))?;
    note(format!(
        "aggregate: {} bins of {} s, split at bin {} (t = {})",
        split.series.len(),
        config.aggregate.dt,
        split.split_bin,
        split.split_time
    ));

    let period = resolve_period(config, &split.train).map_err(|e| e.at_stage("detect_period"))?;
    write_file(&out_dir.join("period.json"), &json(&period)?)?;
    note(format!("period: detected={} bins={} score={:.4}", period.detected, period.period_bins, period.score));

    let fit = train(&split.train, &config.train.config, Some(&period)).map_err(|e| e.at_stage("train"))?;
    write_file(&out_dir.join("model.json"), &fit.model.to_json()?)?;
    note(format!(
        "train: {} iterations, converged={}, objective={:.6}",
        fit.report.iterations, fit.report.converged, fit.report.objective
    ));

    let intensity = predict_test_intensity(&fit.model, config, &split).map_err(|e| e.at_stage("predict"))?;
    let test_queries = events.len() - events.partition_point(|e| e.arrival < split.split_time);
    note(format!("predict: {} bins from t = {}", intensity.len(), intensity.origin()));

    let mut sweeps = Vec::new();
    for (kind, grid) in sweep_grids(config) {
        let spec = SweepSpec {
            kind,
            grid,
            split: split.split_time,
            end: None,
            seed: config.seed,
            planner: planner_config(config),
            intensity: Some(intensity.clone()),
            pending: config.scaling.pending.clone(),
            processing: config.scaling.processing.clone(),
            workers: config.workers,
        };
        let rows = run_sweep(&events, &spec, exec).map_err(|e| e.at_stage("sweep"))?;
        let file = format!("sweep_{}.csv", kind.name());
        let path = out_dir.join(&file);
        let out = std::fs::File::create(&path).map_err(|source| Error::Io { path, source })?;
        write_sweep_csv(out, &rows)?;
        let mut line = format!("sweep {}:", kind.name());
        for r in &rows {
            let _ = write!(line, " [{} hit={:.4} cost={:.4}]", r.param, r.hit_rate, r.relative_cost);
        }
        note(line);
        sweeps.push(SweepSummary { kind, file, rows });
    }

    let summary = RunSummary {
        seed: config.seed,
        queries: events.len(),
        test_queries,
        dt: config.aggregate.dt,
        bins: split.series.len(),
        split_time: split.split_time,
        end: split.end,
        period,
        training: fit.report,
        sweeps,
    };
    write_file(&out_dir.join("summary.json"), &json(&summary)?)?;
    write_file(&out_dir.join("run.log"), &log)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
seed = 11

[trace]
path = "trace.csv"

[trace.synthetic]
horizon = 28800.0
intensity = { kind = "sinusoid", mean = 1.1, amplitude = 0.9, period = 3600.0 }

[aggregate]
dt = 60.0

[train]
split = 0.75
beta1 = 10.0
beta2 = 1.0
rho = 1.0
max_iters = 300
tol_primal = 1e-6
tol_dual = 1e-6
r_floor = -20.0

[scaling]
pending = { kind = "fixed", mean = 13.0 }
processing = { kind = "exponential", mean = 20.0 }
samples = 200

[sweep]
hp_alphas = [0.1, 0.5]
pool_sizes = [0, 2]
"#;

    #[test]
    fn pipeline_is_reproducible() {
        let cfg = RunConfig::parse(CONFIG).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let s = run_e2e(&cfg, a.path(), a.path(), Execution::default()).unwrap();
        run_e2e(&cfg, b.path(), b.path(), Execution::Sequential).unwrap();
        assert_eq!(s.period.period(), Some(60));
        assert_eq!(s.sweeps.len(), 2);
        for f in ["trace.csv", "period.json", "model.json", "sweep_planned_hp.csv", "sweep_backup_pool.csv", "summary.json", "run.log"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert!(x == y, "{f} differs");
        }
    }

    #[test]
    fn split_lands_on_a_bin_edge() {
        let ev: Vec<QueryEvent> = (0..1000).map(|k| QueryEvent::at(30.0 + k as f64)).collect();
        let s = aggregate_and_split(&ev, 60.0, 0.5).unwrap();
        assert_eq!(s.series.epoch(), 0.0);
        assert_eq!(s.series.total(), 1000);
        assert_eq!(s.split_time % 60.0, 0.0);
        assert_eq!(s.train.len(), s.split_bin);
    }

    #[test]
    fn missing_trace_file_is_a_stage_error() {
        let mut cfg = RunConfig::parse(CONFIG).unwrap();
        cfg.trace.synthetic = None;
        cfg.trace.path = Some("nope.csv".into());
        let dir = tempfile::tempdir().unwrap();
        let err = run_e2e(&cfg, dir.path(), dir.path(), Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "trace", .. }), "{err}");
        assert!(!err.is_config_error());
    }
}
