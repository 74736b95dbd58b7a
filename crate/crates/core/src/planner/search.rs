//! Per-query creation-time solvers on Monte Carlo samples of (ξ_i, τ_i).

use crate::error::{Error, Result};

/// A creation time together with its feasibility at the requested level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub time: f64,
    /// The unconstrained optimum fell before `now` and was clamped.
    pub infeasible: bool,
}

impl Decision {
    pub fn clamped(raw: f64, now: f64) -> Self {
        if raw < now {
            Self { time: now, infeasible: true }
        } else {
            Self { time: raw, infeasible: false }
        }
    }
}

/// Ê(x) = mean over r of (τ^r − (ξ^r − x)_+)_+, evaluated directly in O(R).
pub fn expected_waiting(xi: &[f64], tau: &[f64], x: f64) -> f64 {
    let total: f64 = xi
        .iter()
        .zip(tau)
        .map(|(&a, &t)| (t - (a - x).max(0.0)).max(0.0))
        .sum();
    total / xi.len() as f64
}

/// Mean of (w^r − x)_+.
pub fn expected_idle(slack: &[f64], x: f64) -> f64 {
    slack.iter().map(|&w| (w - x).max(0.0)).sum::<f64>() / slack.len() as f64
}

fn check_pairs(xi: &[f64], tau: &[f64]) -> Result<()> {
    if xi.is_empty() {
        return Err(Error::invalid("at least one sample is required"));
    }
    if xi.len() != tau.len() {
        return Err(Error::DimensionMismatch { expected: xi.len(), got: tau.len() });
    }
    if tau.iter().any(|t| !(*t >= 0.0)) || xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite with non-negative pending times"));
    }
    Ok(())
}

/// Leftmost x ≥ min(ξ−τ) with Ê(x) ≥ `target`, in O(R log R).
///
/// Ê is piecewise linear and non-decreasing: zero up to the smallest ξ^r − τ^r, its slope
/// gains 1/R past every ξ^r − τ^r and loses 1/R past every ξ^r, and it reaches mean(τ) past
/// the largest ξ^r. The sweep visits the sorted breakpoints once, carrying R·Ê and the
/// integer slope count, and interpolates inside the crossing segment.
pub fn sort_and_search(xi: &[f64], tau: &[f64], target: f64) -> Result<f64> {
    check_pairs(xi, tau)?;
    let r = xi.len();
    let mean_tau = tau.iter().sum::<f64>() / r as f64;
    if !(target >= 0.0 && target <= mean_tau) {
        return Err(Error::TargetOutOfRange { target, lo: 0.0, hi: mean_tau });
    }
    // (value, kind): kind 0 = ξ (slope −1), kind 1 = ξ−τ (slope +1); ξ-type first on ties
    let mut points: Vec<(f64, u8)> = Vec::with_capacity(2 * r);
    for (&a, &t) in xi.iter().zip(tau) {
        points.push((a, 0));
        points.push((a - t, 1));
    }
    points.sort_unstable_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));

    let scaled_target = target * r as f64;
    let mut prev = points[0].0;
    let mut acc = 0.0; // R·Ê(prev)
    let mut slope: i64 = 0;
    for &(x, kind) in &points {
        if slope > 0 {
            let end = acc + slope as f64 * (x - prev);
            if end >= scaled_target {
                return Ok(prev + (scaled_target - acc) / slope as f64);
            }
            acc = end;
        } else if acc >= scaled_target {
            return Ok(prev);
        }
        prev = x;
        slope += if kind == 0 { -1 } else { 1 };
    }
    Ok(prev)
}

/// HP-constrained optimum from samples of ξ_i − τ_i: their nearest-rank α-quantile.
pub fn solve_hp(slack: &[f64], alpha: f64, now: f64) -> Result<Decision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if slack.is_empty() {
        return Err(Error::invalid("at least one sample is required"));
    }
    Ok(Decision::clamped(nearest_rank(slack, alpha), now))
}

/// HP-constrained optimum for a deterministic pending time: the exact α-quantile of ξ_i minus τ.
pub fn solve_hp_exact(arrival_quantile: f64, tau: f64, now: f64) -> Decision {
    Decision::clamped(arrival_quantile - tau, now)
}

/// Nearest-rank p-quantile: the ⌈pR⌉-th smallest value (at least the first).
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    let k = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *kth
}

/// RT-constrained optimum: the crossing of Ê with d − μ_s.
///
/// When d − μ_s ≥ mean(τ) the constraint never binds and the largest ξ sample is returned;
/// when Ê(now) already exceeds the target, `now` is returned flagged infeasible.
pub fn solve_rt(xi: &[f64], tau: &[f64], d: f64, mu_s: f64, now: f64) -> Result<Decision> {
    if !(d > mu_s) {
        return Err(Error::invalid(format!("RT threshold d={d} must exceed mean processing time {mu_s}")));
    }
    check_pairs(xi, tau)?;
    let target = d - mu_s;
    let mean_tau = tau.iter().sum::<f64>() / tau.len() as f64;
    if target >= mean_tau {
        let last = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(Decision { time: last.max(now), infeasible: false });
    }
    let x = sort_and_search(xi, tau, target)?;
    if x < now {
        let infeasible = expected_waiting(xi, tau, now) > target;
        return Ok(Decision { time: now, infeasible });
    }
    Ok(Decision { time: x, infeasible: false })
}

/// Cost-constrained optimum: the earliest x ≥ now with mean((ξ−τ−x)_+) ≤ `idle_budget`.
pub fn solve_cost_idle(slack: &[f64], idle_budget: f64, now: f64) -> Result<Decision> {
    if !(idle_budget > 0.0) {
        return Err(Error::invalid(format!("idle budget must be positive, got {idle_budget}")));
    }
    if slack.is_empty() {
        return Err(Error::invalid("at least one sample is required"));
    }
    if expected_idle(slack, now) <= idle_budget {
        return Ok(Decision { time: now, infeasible: false });
    }
    // G(x) = Σ_{w > x}(w − x)/R; on the segment below the k largest values, G = (S_k − kx)/R
    let mut w = slack.to_vec();
    w.sort_unstable_by(|a, b| b.total_cmp(a));
    let r = w.len() as f64;
    let mut sum = 0.0;
    for k in 1..=w.len() {
        sum += w[k - 1];
        let x = (sum - idle_budget * r) / k as f64;
        let floor = w.get(k).copied().unwrap_or(f64::NEG_INFINITY);
        if x >= floor {
            return Ok(Decision { time: x.max(now), infeasible: false });
        }
    }
    unreachable!("G(now) > budget guarantees a crossing")
}

/// Cost-constrained optimum with budget B per instance: idle budget B − μ_τ − μ_s.
pub fn solve_cost(slack: &[f64], budget: f64, mu_tau: f64, mu_s: f64, now: f64) -> Result<Decision> {
    if !(budget > mu_tau + mu_s) {
        return Err(Error::invalid(format!(
            "budget {budget} must exceed mean pending plus processing time {}",
            mu_tau + mu_s
        )));
    }
    solve_cost_idle(slack, budget - mu_tau - mu_s, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bisection(xi: &[f64], tau: &[f64], target: f64) -> f64 {
        let mut lo = xi.iter().zip(tau).map(|(a, t)| a - t).fold(f64::INFINITY, f64::min);
        let mut hi = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if expected_waiting(xi, tau, lo) >= target {
            return lo;
        }
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

    #[test]
    fn rt_two_sample_example() {
        let d = solve_rt(&[1.0, 2.0], &[0.5, 0.5], 1.25, 1.0, 0.0).unwrap();
        assert!((d.time - 1.0).abs() < 1e-12);
        assert!(!d.infeasible);
    }

    #[test]
    fn single_segment_interpolation() {
        assert!((sort_and_search(&[2.0], &[1.0], 0.5).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn slack_rt_constraint_returns_last_sample() {
        let d = solve_rt(&[1.0, 4.0, 2.0], &[0.5, 0.5, 0.5], 3.0, 1.0, 0.0).unwrap();
        assert_eq!(d.time, 4.0);
    }

    #[test]
    fn zero_waiting_budget() {
        // one sample cannot be ready in time even when created now
        let d = solve_rt(&[1.0, 5.0], &[2.0, 2.0], 1.0, 1.0 - 1e-9, 0.0).unwrap();
        assert_eq!(d.time, 0.0);
        assert!(d.infeasible);
        let ok = solve_rt(&[3.0, 5.0], &[2.0, 2.0], 1.0 + 1e-12, 1.0, 0.0).unwrap();
        assert!(!ok.infeasible);
        assert!(ok.time >= 0.0 && ok.time <= 1.0 + 1e-6);
    }

    #[test]
    fn rt_rejects_small_threshold() {
        assert!(solve_rt(&[1.0], &[1.0], 1.0, 1.0, 0.0).is_err());
        assert!(matches!(
            sort_and_search(&[1.0], &[1.0], 2.0),
            Err(Error::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn matches_bisection_on_random_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let r = rng.random_range(1..400);
            let xi: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..50.0)).collect();
            let tau: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..15.0)).collect();
            let mean_tau = tau.iter().sum::<f64>() / r as f64;
            let target = rng.random_range(0.0..1.0) * mean_tau;
            let fast = sort_and_search(&xi, &tau, target).unwrap();
            let slow = bisection(&xi, &tau, target);
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn cost_examples() {
        let d = solve_cost_idle(&[1.0, 3.0], 0.5, 0.0).unwrap();
        assert!((d.time - 2.0).abs() < 1e-12);
        assert!((expected_idle(&[1.0, 3.0], d.time) - 0.5).abs() < 1e-12);
        let slack = solve_cost_idle(&[0.5, 1.5], 2.0, 0.0).unwrap();
        assert_eq!(slack.time, 0.0);
        assert!(solve_cost(&[1.0], 3.0, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn hp_examples() {
        let d = solve_hp_exact(0.105361, 0.0, 0.0);
        assert_eq!(d.time, 0.105361);
        let d = solve_hp_exact(0.105361, 5.0, 0.0);
        assert_eq!(d.time, 0.0);
        assert!(d.infeasible);
        let v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(solve_hp(&v, 0.2, 0.0).unwrap().time, 1.0);
        assert_eq!(solve_hp(&v, 0.21, 0.0).unwrap().time, 2.0);
    }

    #[test]
    fn monotone_in_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xi: Vec<f64> = (0..300).map(|_| rng.random_range(10.0..40.0)).collect();
        let tau: Vec<f64> = (0..300).map(|_| rng.random_range(1.0..9.0)).collect();
        let slack: Vec<f64> = xi.iter().zip(&tau).map(|(a, t)| a - t).collect();
        let mut prev = f64::NEG_INFINITY;
        for a in [0.05, 0.1, 0.3, 0.5, 0.9] {
            let x = solve_hp(&slack, a, 0.0).unwrap().time;
            assert!(x >= prev);
            prev = x;
        }
        let mut prev = f64::NEG_INFINITY;
        for d in [1.5, 2.0, 3.0, 4.0, 6.0] {
            let x = solve_rt(&xi, &tau, d, 1.0, 0.0).unwrap().time;
            assert!(x >= prev);
            prev = x;
        }
        let mut prev = f64::INFINITY;
        for b in [0.5, 1.0, 2.0, 5.0, 20.0] {
            let x = solve_cost_idle(&slack, b, 0.0).unwrap().time;
            assert!(x <= prev);
            prev = x;
        }
    }
}
