use serde::{Deserialize, Serialize};

use super::SimEvent;
use crate::error::{Error, Result};

/// Queries per window for the windowed variances.
pub const VARIANCE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtQuantiles {
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub queries: usize,
    pub hit_rate: f64,
    /// Lifetime of every instance: the per-query costs plus `wasted_cost`.
    pub total_cost: f64,
    /// Lifetime of instances that never served a query (deleted, or alive at the end).
    pub wasted_cost: f64,
    /// Total cost of serving the same queries purely reactively.
    pub reactive_cost: f64,
    pub relative_cost: f64,
    pub rt_avg: f64,
    /// Mean of rt − s, the time spent waiting for an instance.
    pub wait_avg: f64,
    pub rt_quantiles: RtQuantiles,
    pub hit_rate_windowed_variance: f64,
    pub rt_windowed_variance: f64,
    pub instances_created: usize,
    pub reactive_creations: usize,
    pub infeasible_plans: usize,
}

/// Nearest-rank quantile of an ascending slice.
fn rank(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Population variance of the means of consecutive complete windows (0 with fewer than two).
pub fn windowed_variance(values: &[f64], window: usize) -> f64 {
    let means: Vec<f64> = values
        .chunks_exact(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect();
    if means.len() < 2 {
        return 0.0;
    }
    let m = means.iter().sum::<f64>() / means.len() as f64;
    means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / means.len() as f64
}

/// Aggregates per-query records. `reactive_cost` is the cost of the same queries served
/// reactively; `wasted_cost` is added to the total.
pub fn compute_metrics(events: &[SimEvent], reactive_cost: f64, wasted_cost: f64) -> Result<SimResult> {
    if events.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = events.len() as f64;
    let hits: Vec<f64> = events.iter().map(|e| if e.hit { 1.0 } else { 0.0 }).collect();
    let rts: Vec<f64> = events.iter().map(|e| e.rt).collect();
    let served: f64 = events.iter().map(|e| e.cost).sum();
    let total_cost = served + wasted_cost;
    let mut sorted = rts.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(SimResult {
        queries: events.len(),
        hit_rate: hits.iter().sum::<f64>() / n,
        total_cost,
        wasted_cost,
        reactive_cost,
        relative_cost: if reactive_cost > 0.0 { total_cost / reactive_cost } else { f64::NAN },
        rt_avg: rts.iter().sum::<f64>() / n,
        wait_avg: events.iter().map(|e| e.rt - e.processing).sum::<f64>() / n,
        rt_quantiles: RtQuantiles {
            p75: rank(&sorted, 0.75),
            p95: rank(&sorted, 0.95),
            p99: rank(&sorted, 0.99),
            p999: rank(&sorted, 0.999),
        },
        hit_rate_windowed_variance: windowed_variance(&hits, VARIANCE_WINDOW),
        rt_windowed_variance: windowed_variance(&rts, VARIANCE_WINDOW),
        instances_created: 0,
        reactive_creations: events.iter().filter(|e| e.reactive).count(),
        infeasible_plans: 0,
    })
}
