use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qscale::exec::Execution;
use qscale::harness::{
    perturb_trace, run_e2e, PerturbationSpec, RunConfig, SweepKind, SweepSection, SyntheticIntensity,
};
use qscale::nhpp::{predict_intensity_capped, select_betas, train, IntensityModel, TrainConfig, DEFAULT_HORIZON_CAP};
use qscale::periodicity::{detect_period, PeriodInfo};
use qscale::planner::{plan_window, Objective, PlannerConfig, Trigger};
use qscale::sim::{replay_with, save_event_log, ReplayOptions, ScalerAdapter};
use qscale::trace::{aggregate_qps, generate_nhpp_trace, ingest_trace, save_trace, QueryEvent, ServiceTimeModel, TraceSchema};
use qscale::{Error, Result};

#[derive(Parser)]
#[command(name = "qscale", version, about = "Per-query proactive autoscaling toolkit")]
struct Cli {
    /// Master RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Aggregation bin width in seconds (overrides the config file).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic NHPP trace.
    Generate {
        #[arg(long, value_enum, default_value = "sinusoid")]
        kind: IntensityKind,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 1.1)]
        mean: f64,
        #[arg(long, default_value_t = 0.9)]
        amplitude: f64,
        #[arg(long, default_value_t = 3600.0)]
        period: f64,
        #[arg(long, default_value_t = 86400.0)]
        horizon: f64,
    },
    /// Detect the dominant period of a trace's QPS series.
    DetectPeriod {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        max_period: Option<usize>,
    },
    /// Fit the regularized NHPP model to a trace.
    Train {
        #[arg(long, alias = "input")]
        trace: PathBuf,
        /// `auto` detects the period, `none` disables the periodic penalty, a number forces L bins.
        #[arg(long, default_value = "auto")]
        period: String,
        #[arg(long)]
        max_period: Option<usize>,
        #[arg(long, default_value_t = 10.0)]
        beta1: f64,
        #[arg(long, default_value_t = 1.0)]
        beta2: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        /// Pick β₁ from this comma list by held-out likelihood, overriding --beta1.
        #[arg(long, value_delimiter = ',')]
        beta1_grid: Vec<f64>,
        /// Pick β₂ from this comma list by held-out likelihood, overriding --beta2.
        #[arg(long, value_delimiter = ',')]
        beta2_grid: Vec<f64>,
        /// Trailing fraction of the series held out when picking β.
        #[arg(long, default_value_t = 0.15)]
        holdout: f64,
    },
    /// Plan instance creation times from a fitted model.
    Plan {
        #[arg(long)]
        model: PathBuf,
        /// Planning time; defaults to the end of the training window.
        #[arg(long)]
        now: Option<f64>,
        #[arg(long, default_value_t = 60.0)]
        horizon: f64,
        /// hp:ALPHA, rt:D or cost:B.
        #[arg(long, default_value = "hp:0.1")]
        objective: String,
        #[arg(long, default_value = "fixed:13")]
        pending: String,
        #[arg(long, default_value_t = 20.0)]
        mu_s: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Replay a trace under one scaler.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        /// hp:ALPHA, rt:D, cost:B, bp:SIZE or adapbp:MULT.
        #[arg(long)]
        scaler: String,
        /// Fitted model, required for hp/rt/cost.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Replay arrivals from this time; defaults to the model end, or the trace start.
        #[arg(long)]
        from: Option<f64>,
        #[arg(long, default_value = "fixed:13")]
        pending: String,
        #[arg(long, default_value = "exp:20")]
        processing: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_enum, default_value = "interval")]
        trigger: TriggerArg,
        #[arg(long, default_value_t = 1.0)]
        interval: f64,
        /// Draw processing times from --processing even where the trace has them.
        #[arg(long)]
        resample_processing: bool,
    },
    /// Run the pipeline with only one sweep from the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Delete and inject traffic in hourly windows.
    Perturb {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 3600.0)]
        period: f64,
        #[arg(long)]
        no_delete: bool,
        #[arg(long)]
        no_inject: bool,
    },
    /// Run every stage from a config file.
    E2e {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IntensityKind {
    Constant,
    Sinusoid,
    DailyPeak,
}

#[derive(Clone, Copy, ValueEnum)]
enum TriggerArg {
    Count,
    Interval,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Hp,
    Rt,
    Cost,
    Bp,
    Adapbp,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

fn exec(workers: Option<usize>) -> Execution {
    match workers {
        Some(1) => Execution::Sequential,
        _ => Execution::default(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(path, text).map_err(io_err(path))
}

fn load_trace(path: &Path) -> Result<Vec<QueryEvent>> {
    ingest_trace(path, &TraceSchema::default())
}

fn load_model(path: &Path) -> Result<IntensityModel> {
    IntensityModel::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

fn parse_objective(s: &str) -> Result<Objective> {
    let (kind, v) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("objective `{s}` must look like kind:value")))?;
    let v: f64 = v.parse().map_err(|_| Error::Config(format!("bad number in `{s}`")))?;
    match kind {
        "hp" => Ok(Objective::Hp { alpha: v }),
        "rt" => Ok(Objective::Rt { d: v }),
        "cost" => Ok(Objective::Cost { budget: v }),
        _ => Err(Error::Config(format!("unknown objective `{kind}`"))),
    }
}

fn resolve_period(events: &[QueryEvent], dt: f64, forced: Option<usize>, max_period: Option<usize>) -> Result<PeriodInfo> {
    if let Some(p) = forced {
        return Ok(PeriodInfo::forced(p));
    }
    let series = aggregate_qps(events, dt)?;
    let day = (86400.0 / dt).round() as usize;
    let max = max_period.unwrap_or(day).min(series.len().saturating_sub(1) / 2).max(2);
    detect_period(&series, max)
}

fn load_config(cli: &Cli, path: &Path) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(dt) = cli.dt {
        cfg.aggregate.dt = dt;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let seed = cli.seed.unwrap_or(0);
    let dt = cli.dt.unwrap_or(60.0);
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Config(format!("--dt must be positive, got {dt}")));
    }
    match &cli.command {
        Command::Generate {
            kind,
            rate,
            mean,
            amplitude,
            period,
            horizon,
        } => {
            let intensity = match kind {
                IntensityKind::Constant => SyntheticIntensity::Constant { rate: *rate },
                IntensityKind::Sinusoid => SyntheticIntensity::Sinusoid {
                    mean: *mean,
                    amplitude: *amplitude,
                    period: *period,
                },
                IntensityKind::DailyPeak => SyntheticIntensity::DailyPeak { period: *period },
            };
            let lam = intensity.tabulate(0.0, *horizon, dt.min(60.0))?;
            let events = generate_nhpp_trace(&lam, 0.0, *horizon, seed)?;
            let path = out.join("trace.csv");
            save_trace(&path, &events)?;
            println!("{} queries written to {}", events.len(), path.display());
        }
        Command::DetectPeriod { trace, max_period } => {
            let events = load_trace(trace)?;
            let info = resolve_period(&events, dt, None, *max_period)?;
            write_json(&out.join("period.json"), &info)?;
            println!("{}", serde_json::to_string(&info).unwrap_or_default());
        }
        Command::Train {
            trace,
            period,
            max_period,
            beta1,
            beta2,
            max_iters,
            beta1_grid,
            beta2_grid,
            holdout,
        } => {
            let events = load_trace(trace)?;
            let info = match period.to_ascii_lowercase().as_str() {
                "auto" => resolve_period(&events, dt, None, *max_period)?,
                "none" => PeriodInfo::NONE,
                p => match p.parse::<usize>() {
                    Ok(l) if l >= 2 => PeriodInfo::forced(l),
                    _ => return Err(Error::Config(format!("--period must be auto, none or a lag of at least 2 bins, got `{period}`"))),
                },
            };
            let mut config = TrainConfig {
                beta1: *beta1,
                beta2: *beta2,
                max_iters: *max_iters,
                ..TrainConfig::default()
            };
            config.validate().map_err(|e| Error::Config(e.to_string()))?;
            let series = aggregate_qps(&events, dt)?;
            if !beta1_grid.is_empty() || !beta2_grid.is_empty() {
                let g1 = if beta1_grid.is_empty() { vec![config.beta1] } else { beta1_grid.clone() };
                let g2 = if beta2_grid.is_empty() { vec![config.beta2] } else { beta2_grid.clone() };
                if g1.iter().chain(&g2).any(|b| b.is_nan() || *b < 0.0) {
                    return Err(Error::Config("beta grids must be non-negative".into()));
                }
                let (chosen, scores) = select_betas(&series, &config, &g1, &g2, Some(&info), *holdout)?;
                let path = out.join("beta_scores.json");
                std::fs::write(&path, serde_json::to_string_pretty(&scores).unwrap_or_default()).map_err(io_err(&path))?;
                config = chosen;
            }
            let fit = train(&series, &config, Some(&info))?;
            let path = out.join("model.json");
            std::fs::write(&path, fit.model.to_json()?).map_err(io_err(&path))?;
            println!("{}", serde_json::to_string(&fit.report).unwrap_or_default());
        }
        Command::Plan {
            model,
            now,
            horizon,
            objective,
            pending,
            mu_s,
            samples,
        } => {
            let model = load_model(model)?;
            let now = now.unwrap_or(model.end());
            let config = PlannerConfig {
                samples: *samples,
                seed,
                ..PlannerConfig::new(parse_objective(objective)?, ServiceTimeModel::parse(pending)?, *mu_s)
            };
            config.validate().map_err(|e| Error::Config(e.to_string()))?;
            // cover the planning window plus the creations that lead it
            let lam = predict_intensity_capped(&model, now, horizon + DEFAULT_HORIZON_CAP, f64::INFINITY)?;
            let plan = plan_window(&lam, &config, now, *horizon, exec(cli.workers))?;
            write_json(&out.join("plan.json"), &plan)?;
            let mut csv = String::from("index,creation_time_s,infeasible\n");
            for (i, t, f) in plan.entries() {
                csv.push_str(&format!("{i},{t:?},{f}\n"));
            }
            let path = out.join("plan.csv");
            std::fs::write(&path, csv).map_err(io_err(&path))?;
            println!("{} creations planned from query {}", plan.len(), plan.first_index);
        }
        Command::Simulate {
            trace,
            scaler,
            model,
            from,
            pending,
            processing,
            samples,
            trigger,
            interval,
            resample_processing,
        } => {
            let events = load_trace(trace)?;
            let pending = ServiceTimeModel::parse(pending)?;
            let processing = ServiceTimeModel::parse(processing)?;
            let (kind, v) = scaler
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("scaler `{scaler}` must look like kind:value")))?;
            let v: f64 = v.parse().map_err(|_| Error::Config(format!("bad number in `{scaler}`")))?;
            let model = model.as_deref().map(load_model).transpose()?;
            let start = from.or(model.as_ref().map(|m| m.end())).unwrap_or(events[0].arrival);
            let adapter = match kind {
                "bp" => ScalerAdapter::BackupPool { size: v as usize },
                "adapbp" => ScalerAdapter::adaptive(v),
                _ => {
                    let model = model.ok_or_else(|| Error::Config("--model is required for hp, rt and cost scalers".into()))?;
                    let last = events.last().map_or(start, |e| e.arrival);
                    let horizon = (last - start).max(dt) + 3600.0;
                    let intensity = predict_intensity_capped(&model, start, horizon, f64::INFINITY)?;
                    let config = PlannerConfig {
                        samples: *samples,
                        seed,
                        planning_interval: *interval,
                        trigger: match trigger {
                            TriggerArg::Count => Trigger::Count,
                            TriggerArg::Interval => Trigger::Interval,
                        },
                        ..PlannerConfig::new(parse_objective(scaler)?, pending.clone(), processing.mean())
                    };
                    config.validate().map_err(|e| Error::Config(e.to_string()))?;
                    ScalerAdapter::Planned { config, intensity }
                }
            };
            let first = events.partition_point(|e| e.arrival < start);
            let options = ReplayOptions {
                start: Some(start),
                end: None,
                exec: Some(exec(cli.workers)),
                resample_processing: *resample_processing,
            };
            let replay = replay_with(&events[first..], &adapter, &pending, &processing, seed, &options)?;
            save_event_log(&out.join("events.csv"), &replay.events)?;
            write_json(&out.join("result.json"), &replay.result)?;
            println!("{}", serde_json::to_string(&replay.result).unwrap_or_default());
        }
        Command::Sweep { config, kind } => {
            let (mut cfg, base) = load_config(cli, config)?;
            let s = std::mem::take(&mut cfg.sweep);
            let kind = match kind {
                KindArg::Hp => SweepKind::PlannedHp,
                KindArg::Rt => SweepKind::PlannedRt,
                KindArg::Cost => SweepKind::PlannedCost,
                KindArg::Bp => SweepKind::BackupPool,
                KindArg::Adapbp => SweepKind::AdaptiveBackupPool,
            };
            cfg.sweep = match kind {
                SweepKind::PlannedHp => SweepSection { hp_alphas: s.hp_alphas, ..Default::default() },
                SweepKind::PlannedRt => SweepSection { rt_targets: s.rt_targets, ..Default::default() },
                SweepKind::PlannedCost => SweepSection { cost_budgets: s.cost_budgets, ..Default::default() },
                SweepKind::BackupPool => SweepSection { pool_sizes: s.pool_sizes, ..Default::default() },
                SweepKind::AdaptiveBackupPool => SweepSection {
                    adaptive_multipliers: s.adaptive_multipliers,
                    ..Default::default()
                },
            };
            let summary = run_e2e(&cfg, &base, out, exec(cli.workers))?;
            if summary.sweeps.is_empty() {
                return Err(Error::Config(format!("the config has no grid for {}", kind.name())));
            }
            println!("wrote {}", out.join(&summary.sweeps[0].file).display());
        }
        Command::Perturb {
            trace,
            c,
            period,
            no_delete,
            no_inject,
        } => {
            let events = load_trace(trace)?;
            let d = PerturbationSpec::default();
            let spec = PerturbationSpec {
                period: *period,
                deletion: if *no_delete { None } else { d.deletion },
                injection: if *no_inject { None } else { d.injection },
                c: *c,
                ..d
            };
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            let p = perturb_trace(&events, &spec, seed)?;
            let path = out.join("trace_perturbed.csv");
            save_trace(&path, &p.events)?;
            if p.empty {
                eprintln!("warning: every query was deleted");
            }
            println!("{} -> {} queries, written to {}", events.len(), p.events.len(), path.display());
        }
        Command::E2e { config } => {
            let (cfg, base) = load_config(cli, config)?;
            let summary = run_e2e(&cfg, &base, out, exec(cli.workers))?;
            println!(
                "{} queries, period {:?}, {} sweeps written to {}",
                summary.queries,
                summary.period.period(),
                summary.sweeps.len(),
                out.display()
            );
        }
    }
    Ok(())
}
