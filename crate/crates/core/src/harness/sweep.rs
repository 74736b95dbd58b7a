use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::intensity::PiecewiseConstant;
use crate::planner::{Objective, PlannerConfig};
use crate::sim::{replay_with, ReplayOptions, ScalerAdapter};
use crate::trace::{QueryEvent, ServiceTimeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    PlannedHp,
    PlannedRt,
    PlannedCost,
    BackupPool,
    AdaptiveBackupPool,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlannedHp => "planned_hp",
            Self::PlannedRt => "planned_rt",
            Self::PlannedCost => "planned_cost",
            Self::BackupPool => "backup_pool",
            Self::AdaptiveBackupPool => "adaptive_backup_pool",
        }
    }

    fn needs_intensity(self) -> bool {
        matches!(self, Self::PlannedHp | Self::PlannedRt | Self::PlannedCost)
    }
}

/// One Pareto sweep over the test part of a trace.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// α, d, B, pool size or multiplier, depending on `kind`.
    pub grid: Vec<f64>,
    /// Arrivals at or after `split` are replayed.
    pub split: f64,
    /// Where unused instances stop accruing cost; defaults to the last arrival.
    pub end: Option<f64>,
    pub seed: u64,
    /// Planner settings for planned sweeps; the objective is replaced per grid point.
    pub planner: PlannerConfig,
    /// Predicted intensity covering the test part, for planned sweeps.
    pub intensity: Option<PiecewiseConstant>,
    pub pending: ServiceTimeModel,
    pub processing: ServiceTimeModel,
    /// Concurrent grid points; 0 uses the global pool.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub hit_rate: f64,
    pub relative_cost: f64,
    pub rt_avg: f64,
    pub wait_avg: f64,
    pub total_cost: f64,
    pub hit_rate_windowed_variance: f64,
    pub rt_windowed_variance: f64,
}

impl SweepSpec {
    pub fn adapter(&self, param: f64) -> Result<ScalerAdapter> {
        let planned = |objective| -> Result<ScalerAdapter> {
            let intensity = self
                .intensity
                .clone()
                .ok_or_else(|| Error::invalid("planned sweeps need a predicted intensity"))?;
            let config = PlannerConfig {
                objective,
                ..self.planner.clone()
            };
            config.validate()?;
            Ok(ScalerAdapter::Planned { config, intensity })
        };
        match self.kind {
            SweepKind::PlannedHp => planned(Objective::Hp { alpha: param }),
            SweepKind::PlannedRt => planned(Objective::Rt { d: param }),
            SweepKind::PlannedCost => planned(Objective::Cost { budget: param }),
            SweepKind::BackupPool => {
                if !(param >= 0.0 && param.fract() == 0.0) {
                    return Err(Error::invalid(format!("pool size must be a non-negative integer, got {param}")));
                }
                Ok(ScalerAdapter::BackupPool { size: param as usize })
            }
            SweepKind::AdaptiveBackupPool => Ok(ScalerAdapter::adaptive(param)),
        }
    }
}

/// Replays every grid point on the test part. Points run concurrently under `exec`; each
/// replay itself is sequential.
pub fn run_sweep(events: &[QueryEvent], spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRow>> {
    if spec.grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if spec.kind.needs_intensity() && spec.intensity.is_none() {
        return Err(Error::invalid("planned sweeps need a predicted intensity"));
    }
    let first = events.partition_point(|e| e.arrival < spec.split);
    let test = &events[first..];
    if test.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let options = ReplayOptions {
        start: Some(spec.split),
        end: spec.end,
        exec: Some(Execution::Sequential),
        ..ReplayOptions::default()
    };
    let rows = exec.map_indexed_bounded(spec.grid.len(), spec.workers, |k| -> Result<SweepRow> {
        let param = spec.grid[k];
        let adapter = spec.adapter(param).map_err(|e| Error::SweepPoint {
            param,
            source: Box::new(e),
        })?;
        let r = replay_with(test, &adapter, &spec.pending, &spec.processing, spec.seed, &options)
            .map_err(|e| Error::SweepPoint {
                param,
                source: Box::new(e),
            })?
            .result;
        Ok(SweepRow {
            param,
            hit_rate: r.hit_rate,
            relative_cost: r.relative_cost,
            rt_avg: r.rt_avg,
            wait_avg: r.wait_avg,
            total_cost: r.total_cost,
            hit_rate_windowed_variance: r.hit_rate_windowed_variance,
            rt_windowed_variance: r.rt_windowed_variance,
        })
    });
    rows.into_iter().collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::generate_nhpp_trace;

    fn spec(kind: SweepKind, grid: Vec<f64>, intensity: Option<PiecewiseConstant>) -> SweepSpec {
        let pending = ServiceTimeModel::fixed(13.0).unwrap();
        SweepSpec {
            kind,
            grid,
            split: 500.0,
            end: None,
            seed: 1,
            planner: PlannerConfig::new(Objective::Hp { alpha: 0.1 }, pending.clone(), 20.0),
            intensity,
            pending,
            processing: ServiceTimeModel::exponential(20.0).unwrap(),
            workers: 2,
        }
    }

    #[test]
    fn pool_sweep_rows_are_monotone() {
        let lam = PiecewiseConstant::constant(0.5, 0.0, 3000.0).unwrap();
        let trace = generate_nhpp_trace(&lam, 0.0, 3000.0, 2).unwrap();
        let rows = run_sweep(&trace, &spec(SweepKind::BackupPool, (0..9).map(f64::from).collect(), None), Execution::default()).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows.windows(2).all(|w| w[1].hit_rate >= w[0].hit_rate));
        assert!((rows[0].relative_cost - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }

    #[test]
    fn sweep_errors() {
        let lam = PiecewiseConstant::constant(0.5, 0.0, 400.0).unwrap();
        let trace = generate_nhpp_trace(&lam, 0.0, 400.0, 2).unwrap();
        // the split lies after every arrival
        assert!(matches!(
            run_sweep(&trace, &spec(SweepKind::BackupPool, vec![1.0], None), Execution::Sequential),
            Err(Error::EmptyTrace)
        ));
        assert!(run_sweep(&trace, &spec(SweepKind::PlannedHp, vec![0.1], None), Execution::Sequential).is_err());
        assert!(run_sweep(&trace, &spec(SweepKind::BackupPool, vec![], None), Execution::Sequential).is_err());
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree() {
        let lam = PiecewiseConstant::constant(1.0, 0.0, 2000.0).unwrap();
        let trace = generate_nhpp_trace(&lam, 0.0, 1500.0, 5).unwrap();
        let s = spec(SweepKind::PlannedHp, vec![0.05, 0.2, 0.5], Some(lam));
        let a = run_sweep(&trace, &s, Execution::Sequential).unwrap();
        let b = run_sweep(&trace, &s, Execution::default()).unwrap();
        assert_eq!(a, b);
        assert!(a[0].hit_rate >= a[2].hit_rate);
    }
}
