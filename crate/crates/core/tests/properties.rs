use proptest::prelude::*;

#[cfg(feature = "parallel")]
use qscale::exec::Execution;
use qscale::harness::{perturb_trace, PerturbationSpec, RunConfig};
use qscale::intensity::{Intensity, PiecewiseConstant};
use qscale::nhpp::soft_threshold;
use qscale::planner::{expected_waiting, sort_and_search};
use qscale::sim::{replay_with, ReplayOptions, ScalerAdapter};
use qscale::trace::{aggregate_qps, read_trace, write_trace, QueryEvent, ServiceTimeModel, TraceSchema};

fn arrivals() -> impl Strategy<Value = Vec<QueryEvent>> {
    prop::collection::vec(0.0f64..5000.0, 1..300).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.into_iter().map(QueryEvent::at).collect()
    })
}

// plain bisection on the monotone Ê
fn bisect(xi: &[f64], tau: &[f64], target: f64) -> f64 {
    let mut lo = xi.iter().zip(tau).map(|(a, t)| a - t).fold(f64::INFINITY, f64::min);
    let mut hi = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_waiting(xi, tau, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_preserves_counts(events in arrivals(), step in 1.0f64..120.0) {
        let s = aggregate_qps(&events, step).unwrap();
        prop_assert_eq!(s.counts().iter().sum::<u64>() as usize, events.len());
    }

    #[test]
    fn trace_csv_round_trip(events in arrivals(), with_s in any::<bool>()) {
        let events: Vec<QueryEvent> = events
            .into_iter()
            .enumerate()
            .map(|(i, e)| QueryEvent { processing: with_s.then_some(1.0 + i as f64 / 7.0), ..e })
            .collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, &events).unwrap();
        let back = read_trace(buf.as_slice(), &TraceSchema::default()).unwrap();
        prop_assert_eq!(back, events);
    }

    #[test]
    fn sort_and_search_agrees_with_bisection(
        pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..30.0), 1..200),
        frac in 0.01f64..0.99,
    ) {
        let (xi, tau): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mean_tau = tau.iter().sum::<f64>() / tau.len() as f64;
        prop_assume!(mean_tau > 1e-6);
        let target = frac * mean_tau;
        let x = sort_and_search(&xi, &tau, target).unwrap();
        prop_assert!((expected_waiting(&xi, &tau, x) - target).abs() < 1e-9 * (1.0 + mean_tau));
        prop_assert!((x - bisect(&xi, &tau, target)).abs() < 1e-7);
    }

    #[test]
    fn inverse_undoes_integrate(rates in prop::collection::vec(0.0f64..5.0, 1..40), a in 0.0f64..20.0, m in 0.0f64..10.0) {
        prop_assume!(rates.iter().any(|&r| r > 0.0));
        let lam = PiecewiseConstant::new(0.0, 1.0, rates).unwrap();
        prop_assume!(lam.integrate(a, lam.len() as f64) > m);
        let b = lam.inverse(a, m).unwrap();
        prop_assert!(b >= a);
        prop_assert!((lam.integrate(a, b) - m).abs() < 1e-9);
    }

    #[test]
    fn soft_threshold_shrinks(x in -100.0f64..100.0, c in 0.0f64..50.0) {
        let y = soft_threshold(x, c);
        prop_assert!(y.abs() <= x.abs());
        prop_assert!(y == 0.0 || y.signum() == x.signum());
        prop_assert!(((x - y).abs() - c.min(x.abs())).abs() < 1e-12);
    }

    #[test]
    fn perturbation_keeps_windows_and_order(events in arrivals(), seed in any::<u64>()) {
        let spec = PerturbationSpec { period: 1000.0, deletion: Some((0.0, 100.0)), injection: Some((200.0, 100.0)), ..PerturbationSpec::default() };
        let p = perturb_trace(&events, &spec, seed).unwrap();
        prop_assert!(p.events.windows(2).all(|w| w[0].arrival <= w[1].arrival));
        prop_assert!(p.events.iter().all(|e| e.arrival % 1000.0 >= 100.0));
        let injected = |v: &[QueryEvent]| v.iter().filter(|e| (200.0..300.0).contains(&(e.arrival % 1000.0))).count();
        prop_assert_eq!(injected(&p.events), 2 * injected(&events));
    }

    #[test]
    fn pool_replay_conserves_queries(events in arrivals(), size in 0usize..6, seed in any::<u64>()) {
        let r = replay_with(
            &events,
            &ScalerAdapter::BackupPool { size },
            &ServiceTimeModel::fixed(13.0).unwrap(),
            &ServiceTimeModel::exponential(20.0).unwrap(),
            seed,
            &ReplayOptions::default(),
        )
        .unwrap();
        prop_assert_eq!(r.events.len(), events.len());
        prop_assert!((0.0..=1.0).contains(&r.result.hit_rate));
        prop_assert!(r.result.rt_avg + 1e-9 >= r.events.iter().map(|e| e.processing).sum::<f64>() / events.len() as f64);
        prop_assert!(r.result.total_cost + 1e-9 >= r.events.iter().map(|e| e.cost).sum::<f64>());
    }
}

#[cfg(feature = "parallel")]
#[test]
fn sampling_is_identical_across_execution_modes() {
    let lam = PiecewiseConstant::new(0.0, 10.0, vec![0.5, 2.0, 1.0, 3.0]).unwrap();
    let pending = ServiceTimeModel::exponential(13.0).unwrap();
    use qscale::arrival::sample_arrivals;
    let a = sample_arrivals(&lam, 2.0, 25, 500, &pending, 11, Execution::Sequential).unwrap();
    let b = sample_arrivals(&lam, 2.0, 25, 500, &pending, 11, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn shipped_config_round_trips() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic_periodic.toml");
    let cfg = RunConfig::load(std::path::Path::new(path)).unwrap();
    let again = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
}
