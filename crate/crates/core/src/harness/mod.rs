//! Experiment harness: run configs, Pareto sweeps, trace perturbation and the end-to-end pipeline.

mod config;
mod e2e;
mod perturb;
mod sweep;

pub use config::{
    AggregateSection, RunConfig, ScalingSection, SweepSection, SyntheticIntensity, SyntheticTrace, TraceSection,
    TrainSection,
};
pub use e2e::{
    aggregate_and_split, load_events, planner_config, predict_test_intensity, resolve_period, run_e2e, sweep_grids,
    RunSummary, SplitSeries, SweepSummary,
};
pub use perturb::{perturb_trace, PerturbationSpec, Perturbed};
pub use sweep::{run_sweep, write_sweep_csv, SweepKind, SweepRow, SweepSpec};
