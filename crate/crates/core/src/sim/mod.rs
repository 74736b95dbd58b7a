//! Discrete-event replay of the scaling dynamics.
//!
//! Every query consumes one instance. An instance created at x with pending time τ is ready at
//! x + τ; the query arriving at ξ starts processing at max(ξ, x + τ) and the instance is
//! deleted when processing ends. A query with no instance available at ξ creates one
//! reactively at ξ.
//!
//! Randomness: the c-th instance created (in creation order) draws its pending time as the
//! c-th value of the `(seed, Pending, 0)` stream, and query i draws its processing time as the
//! i-th value of `(seed, Processing, 0)` unless the trace records one. Under index pairing and
//! under the reactive baseline the c-th creation serves query c, so both see the same draws.

mod metrics;

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, windowed_variance, RtQuantiles, SimResult, VARIANCE_WINDOW};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::intensity::PiecewiseConstant;
use crate::planner::{sequential_plan_step, PlannerConfig, SequentialState, Trigger};
use crate::rng::{stream, Domain};
use crate::trace::{QueryEvent, ServiceTimeModel};

/// One served query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    /// 1-based query index.
    pub index: usize,
    pub arrival: f64,
    /// Creation time of the serving instance (the arrival itself when created reactively).
    pub creation: f64,
    pub pending: f64,
    pub processing: f64,
    pub ready_time: f64,
    pub completion: f64,
    pub rt: f64,
    pub cost: f64,
    pub hit: bool,
    pub reactive: bool,
}

impl SimEvent {
    /// Plays one query through the timeline.
    pub fn serve(index: usize, arrival: f64, creation: f64, pending: f64, processing: f64, reactive: bool) -> Self {
        let ready_time = creation + pending;
        let completion = arrival.max(ready_time) + processing;
        Self {
            index,
            arrival,
            creation,
            pending,
            processing,
            ready_time,
            completion,
            rt: completion - arrival,
            cost: completion - creation,
            hit: ready_time <= arrival,
            reactive,
        }
    }

    /// s + (τ − (ξ − x)_+)_+
    pub fn closed_form_rt(&self) -> f64 {
        self.processing + (self.pending - (self.arrival - self.creation).max(0.0)).max(0.0)
    }

    /// (ξ − x − τ)_+ + τ + s
    pub fn closed_form_cost(&self) -> f64 {
        (self.arrival - self.creation - self.pending).max(0.0) + self.pending + self.processing
    }
}

/// How instances get created.
#[derive(Debug, Clone)]
pub enum ScalerAdapter {
    /// Planned creations paired with queries by index.
    Planned {
        config: PlannerConfig,
        intensity: PiecewiseConstant,
    },
    /// A pool of `size` instances replenished at each consumption.
    BackupPool { size: usize },
    /// A pool resized to ⌈recent QPS × multiplier⌉ every `window` seconds.
    AdaptiveBackupPool { multiplier: f64, window: f64 },
}

impl ScalerAdapter {
    pub fn adaptive(multiplier: f64) -> Self {
        Self::AdaptiveBackupPool {
            multiplier,
            window: ADAPTIVE_WINDOW,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Planned { config, .. } => match config.objective {
                crate::planner::Objective::Hp { .. } => "planned_hp".into(),
                crate::planner::Objective::Rt { .. } => "planned_rt".into(),
                crate::planner::Objective::Cost { .. } => "planned_cost".into(),
            },
            Self::BackupPool { size } => format!("backup_pool({size})"),
            Self::AdaptiveBackupPool { multiplier, .. } => format!("adaptive_backup_pool({multiplier})"),
        }
    }
}

pub const ADAPTIVE_WINDOW: f64 = 600.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayOptions {
    /// Scaler start time; defaults to the first arrival.
    pub start: Option<f64>,
    /// End of the replay window, where unused instances stop accruing cost; defaults to the
    /// last arrival.
    pub end: Option<f64>,
    pub exec: Option<Execution>,
    /// Draw processing times from the model even for events that carry one.
    pub resample_processing: bool,
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub events: Vec<SimEvent>,
    pub result: SimResult,
}

// pending times in creation order
struct PendingDraws<'a> {
    model: &'a ServiceTimeModel,
    rng: ChaCha8Rng,
    drawn: Vec<f64>,
}

impl<'a> PendingDraws<'a> {
    fn new(model: &'a ServiceTimeModel, seed: u64) -> Self {
        Self {
            model,
            rng: stream(seed, Domain::Pending, 0),
            drawn: Vec::new(),
        }
    }

    // value for the c-th creation (0-based)
    fn get(&mut self, c: usize) -> f64 {
        while self.drawn.len() <= c {
            let v = self.model.sample(&mut self.rng);
            self.drawn.push(v);
        }
        self.drawn[c]
    }
}

/// Replays `events` (sorted by arrival) under `scaler`.
pub fn replay(
    events: &[QueryEvent],
    scaler: &ScalerAdapter,
    pending_model: &ServiceTimeModel,
    processing_model: &ServiceTimeModel,
    seed: u64,
) -> Result<Replay> {
    replay_with(events, scaler, pending_model, processing_model, seed, &ReplayOptions::default())
}

pub fn replay_with(
    events: &[QueryEvent],
    scaler: &ScalerAdapter,
    pending_model: &ServiceTimeModel,
    processing_model: &ServiceTimeModel,
    seed: u64,
    options: &ReplayOptions,
) -> Result<Replay> {
    if events.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(k) = events.windows(2).position(|w| w[1].arrival < w[0].arrival) {
        return Err(Error::invalid(format!("events are not sorted at query {}", k + 2)));
    }
    pending_model.validate()?;
    processing_model.validate()?;
    let first = events[0].arrival;
    let last = events[events.len() - 1].arrival;
    let start = options.start.unwrap_or(first).min(first);
    let end = options.end.unwrap_or(last).max(last);

    let mut processing_rng = stream(seed, Domain::Processing, 0);
    let processing: Vec<f64> = events
        .iter()
        .map(|e| {
            let drawn = processing_model.sample(&mut processing_rng);
            match e.processing {
                Some(s) if !options.resample_processing => s,
                _ => drawn,
            }
        })
        .collect();
    let mut pending = PendingDraws::new(pending_model, seed);
    let reactive_cost: f64 = (0..events.len()).map(|i| pending.get(i) + processing[i]).sum();

    let outcome = match scaler {
        ScalerAdapter::Planned { config, intensity } => {
            config.validate()?;
            let exec = options.exec.unwrap_or_default();
            run_planned(events, &processing, &mut pending, config, intensity, start, end, exec)?
        }
        ScalerAdapter::BackupPool { size } => run_pool(events, &processing, &mut pending, start, end, |_, _| *size, None),
        ScalerAdapter::AdaptiveBackupPool { multiplier, window } => {
            if !(*multiplier >= 0.0 && multiplier.is_finite()) || !(*window > 0.0) {
                return Err(Error::invalid("adaptive pool needs multiplier >= 0 and window > 0"));
            }
            let (m, w) = (*multiplier, *window);
            let target = move |count: usize, span: f64| {
                if span <= 0.0 {
                    0
                } else {
                    (count as f64 / span * m).ceil() as usize
                }
            };
            run_pool(events, &processing, &mut pending, start, end, target, Some(w))
        }
    };
    let mut result = compute_metrics(&outcome.events, reactive_cost, outcome.wasted)?;
    result.instances_created = outcome.created;
    result.infeasible_plans = outcome.infeasible;
    Ok(Replay {
        events: outcome.events,
        result,
    })
}

struct Outcome {
    events: Vec<SimEvent>,
    wasted: f64,
    created: usize,
    infeasible: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_planned(
    events: &[QueryEvent],
    processing: &[f64],
    pending: &mut PendingDraws<'_>,
    config: &PlannerConfig,
    intensity: &PiecewiseConstant,
    start: f64,
    end: f64,
    exec: Execution,
) -> Result<Outcome> {
    let n = events.len();
    // scheduled[i] = creation time planned for query i + 1
    let mut scheduled: Vec<f64> = Vec::new();
    let mut infeasible = 0;
    let mut state = SequentialState::new();
    let mut exhausted = false;
    let mut round = |state: &mut SequentialState, now: f64, scheduled: &mut Vec<f64>| -> Result<bool> {
        match sequential_plan_step(state, intensity, config, now, exec) {
            Ok(plan) => {
                // queries that arrived before any round reached them stay unplanned
                if plan.first_index > scheduled.len() + 1 {
                    scheduled.resize(plan.first_index - 1, f64::INFINITY);
                }
                infeasible += plan.infeasible.iter().filter(|&&f| f).count();
                scheduled.extend(plan.creation_times);
                Ok(false)
            }
            Err(Error::HorizonExhausted { .. }) => {
                log::debug!("prediction exhausted at t={now}; planning stops");
                Ok(true)
            }
            Err(e) => Err(e),
        }
    };

    match config.trigger {
        Trigger::Count => {
            exhausted = round(&mut state, start, &mut scheduled)?;
            let mut seen = 0;
            while seen < n && !exhausted {
                seen = (seen + config.m).min(n);
                state.observe(seen)?;
                if seen < n {
                    exhausted = round(&mut state, events[seen - 1].arrival, &mut scheduled)?;
                }
            }
        }
        Trigger::Interval => {
            let delta = config.planning_interval;
            let mut seen = 0;
            let mut k: u64 = 0;
            loop {
                let now = start + k as f64 * delta;
                if now > end || exhausted {
                    break;
                }
                while seen < n && events[seen].arrival <= now {
                    seen += 1;
                }
                state.observe(seen)?;
                exhausted = round(&mut state, now, &mut scheduled)?;
                k += 1;
            }
        }
    }

    let mut out = Vec::with_capacity(n);
    for (i, e) in events.iter().enumerate() {
        let tau = pending.get(i);
        match scheduled.get(i) {
            Some(&x) if x <= e.arrival => out.push(SimEvent::serve(i + 1, e.arrival, x, tau, processing[i], false)),
            // never planned, or planned after the arrival and canceled
            _ => out.push(SimEvent::serve(i + 1, e.arrival, e.arrival, tau, processing[i], true)),
        }
    }
    let leftovers: Vec<f64> = scheduled.iter().skip(n).copied().filter(|&x| x < end).collect();
    Ok(Outcome {
        wasted: leftovers.iter().map(|x| end - x).sum(),
        created: n + leftovers.len(),
        events: out,
        infeasible,
    })
}

#[derive(Debug, Clone, Copy)]
struct Instance {
    created: f64,
    pending: f64,
}

/// Shared pool dynamics; `target(count, span)` gives the pool size from `count` arrivals seen
/// over the last `span` seconds (constant for the plain pool, where `window` is `None`).
fn run_pool(
    events: &[QueryEvent],
    processing: &[f64],
    pending: &mut PendingDraws<'_>,
    start: f64,
    end: f64,
    target: impl Fn(usize, f64) -> usize,
    window: Option<f64>,
) -> Outcome {
    let mut pool: VecDeque<Instance> = VecDeque::new();
    let mut created = 0usize;
    let mut wasted = 0.0;
    fn create(pool: &mut VecDeque<Instance>, pending: &mut PendingDraws<'_>, t: f64, created: &mut usize) {
        let tau = pending.get(*created);
        *created += 1;
        pool.push_back(Instance { created: t, pending: tau });
    }
    let mut size = target(0, 0.0);
    for _ in 0..size {
        create(&mut pool, pending, start, &mut created);
    }
    let mut next_reset = window.map(|w| start + w);
    let mut window_start = 0; // first event index inside the averaging window
    let mut out = Vec::with_capacity(events.len());

    for (i, e) in events.iter().enumerate() {
        // resizes due before this arrival
        while let (Some(t), Some(w)) = (next_reset, window) {
            if t > e.arrival {
                break;
            }
            let from = (t - w).max(start);
            while window_start < i && events[window_start].arrival < from {
                window_start += 1;
            }
            let count = events[window_start..i].iter().filter(|q| q.arrival < t).count();
            size = target(count, t - from);
            while pool.len() > size {
                let dropped = pool.pop_back().expect("non-empty");
                wasted += t - dropped.created;
            }
            while pool.len() < size {
                create(&mut pool, pending, t, &mut created);
            }
            next_reset = Some(t + w);
        }
        match pool.pop_front() {
            Some(inst) => {
                out.push(SimEvent::serve(i + 1, e.arrival, inst.created, inst.pending, processing[i], false));
            }
            None => {
                let tau = pending.get(created);
                created += 1;
                out.push(SimEvent::serve(i + 1, e.arrival, e.arrival, tau, processing[i], true));
            }
        }
        while pool.len() < size {
            create(&mut pool, pending, e.arrival, &mut created);
        }
    }
    wasted += pool.iter().map(|inst| (end - inst.created).max(0.0)).sum::<f64>();
    Outcome {
        events: out,
        wasted,
        created,
        infeasible: 0,
    }
}

/// Writes the per-query log as CSV.
pub fn write_event_log<W: Write>(out: W, events: &[SimEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["index", "arrival_s", "creation_s", "pending_s", "processing_s", "rt_s", "cost_s", "hit"])
        .map_err(ser)?;
    for e in events {
        w.write_record([
            e.index.to_string(),
            format!("{:?}", e.arrival),
            format!("{:?}", e.creation),
            format!("{:?}", e.pending),
            format!("{:?}", e.processing),
            format!("{:?}", e.rt),
            format!("{:?}", e.cost),
            e.hit.to_string(),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn save_event_log(path: &Path, events: &[SimEvent]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_event_log(std::io::BufWriter::new(file), events)
}
