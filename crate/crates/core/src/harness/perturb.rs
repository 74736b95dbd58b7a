use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::trace::{sort_events, QueryEvent};

/// Hourly deletion gaps and injected bursts. Offsets are measured from `origin + k·period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub origin: f64,
    pub period: f64,
    /// `(offset, length)` of the deletion window in each period, if any.
    pub deletion: Option<(f64, f64)>,
    /// `(offset, length)` of the injection window in each period, if any.
    pub injection: Option<(f64, f64)>,
    /// Replicas added per event inside an injection window; a fractional part adds one more
    /// replica with that probability.
    pub c: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            origin: 0.0,
            period: 3600.0,
            deletion: Some((0.0, 300.0)),
            injection: Some((300.0, 300.0)),
            c: 1.0,
        }
    }
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        Self {
            deletion: None,
            injection: None,
            c: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid("perturbation period must be positive"));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("amplification c must be non-negative, got {}", self.c)));
        }
        for (offset, len) in self.deletion.iter().chain(&self.injection) {
            if !(*offset >= 0.0 && *len >= 0.0 && offset + len <= self.period) {
                return Err(Error::invalid("perturbation windows must fit inside one period"));
            }
        }
        Ok(())
    }

    // window index and start if t falls in the window
    fn window(&self, t: f64, w: Option<(f64, f64)>) -> Option<(i64, f64)> {
        let (offset, len) = w?;
        let k = ((t - self.origin) / self.period).floor();
        let start = self.origin + k * self.period + offset;
        (t >= start && t < start + len).then_some((k as i64, start))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub events: Vec<QueryEvent>,
    /// Every event was deleted.
    pub empty: bool,
}

/// Deletes events inside the deletion windows and replicates events inside the injection
/// windows, placing replicas uniformly at random in the same window.
pub fn perturb_trace(events: &[QueryEvent], spec: &PerturbationSpec, seed: u64) -> Result<Perturbed> {
    spec.validate()?;
    let mut out = Vec::with_capacity(events.len());
    let mut replicas = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if spec.window(e.arrival, spec.deletion).is_some() {
            continue;
        }
        out.push(*e);
        if spec.c == 0.0 {
            continue;
        }
        if let Some((_, start)) = spec.window(e.arrival, spec.injection) {
            let len = spec.injection.map_or(0.0, |w| w.1);
            let mut rng = stream(seed, Domain::Perturb, i as u64);
            let mut copies = spec.c.floor() as usize;
            if rng.random::<f64>() < spec.c.fract() {
                copies += 1;
            }
            for _ in 0..copies {
                let t = start + rng.random::<f64>() * len;
                replicas.push(QueryEvent {
                    arrival: t,
                    processing: e.processing,
                });
            }
        }
    }
    out.extend(replicas);
    sort_events(&mut out);
    let empty = out.is_empty();
    if empty {
        log::warn!("perturbation removed every event");
    }
    Ok(Perturbed { events: out, empty })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, span: f64) -> Vec<QueryEvent> {
        (0..n).map(|k| QueryEvent::at(k as f64 * span / n as f64)).collect()
    }

    #[test]
    fn identity_spec() {
        let ev = uniform(500, 7200.0);
        let p = perturb_trace(&ev, &PerturbationSpec::identity(), 1).unwrap();
        assert_eq!(p.events, ev);
        assert!(!p.empty);
    }

    #[test]
    fn one_replica_doubles_the_window() {
        let ev = uniform(720, 3600.0);
        let spec = PerturbationSpec {
            deletion: None,
            ..PerturbationSpec::default()
        };
        let in_window = |v: &[QueryEvent]| v.iter().filter(|e| e.arrival >= 300.0 && e.arrival < 600.0).count();
        let k = in_window(&ev);
        let p = perturb_trace(&ev, &spec, 4).unwrap();
        assert_eq!(in_window(&p.events), 2 * k);
        assert_eq!(p.events.len(), ev.len() + k);
        assert!(p.events.windows(2).all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn deletion_gaps_and_empty_flag() {
        let ev = uniform(720, 7200.0);
        let p = perturb_trace(&ev, &PerturbationSpec { injection: None, ..PerturbationSpec::default() }, 0).unwrap();
        assert!(p.events.iter().all(|e| (e.arrival % 3600.0) >= 300.0));
        let all = PerturbationSpec {
            deletion: Some((0.0, 3600.0)),
            injection: None,
            ..PerturbationSpec::default()
        };
        let p = perturb_trace(&ev, &all, 0).unwrap();
        assert!(p.empty && p.events.is_empty());
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = PerturbationSpec { c: -1.0, ..PerturbationSpec::default() };
        assert!(perturb_trace(&[], &bad, 0).is_err());
        let bad = PerturbationSpec { injection: Some((3500.0, 200.0)), ..PerturbationSpec::default() };
        assert!(perturb_trace(&[], &bad, 0).is_err());
    }
}
