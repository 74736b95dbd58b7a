//! Integrated intensity, its inverse, and the law of the i-th upcoming arrival.
//!
//! Under time rescaling, Λ(ξ_i) − Λ(now) is Gamma(i, 1) distributed. Exact arrival quantiles
//! therefore come from a Gamma quantile mapped back through Λ⁻¹, and Monte Carlo samples from
//! cumulative sums of unit exponentials mapped the same way.

mod gamma;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

pub use gamma::{gamma_quantile, QUANTILE_TOLERANCE};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::intensity::{Intensity, PiecewiseConstant};
use crate::rng::{stream, Domain};
use crate::trace::ServiceTimeModel;

/// ∫_from^to λ(t) dt.
pub fn integrate(intensity: &dyn Intensity, from: f64, to: f64) -> Result<f64> {
    if !(from <= to) {
        return Err(Error::invalid(format!("integration bounds out of order: {from} > {to}")));
    }
    Ok(intensity.integrate(from, to))
}

/// Smallest t with ∫_from^t λ = mass.
pub fn inverse_integrate(intensity: &dyn Intensity, from: f64, mass: f64) -> Result<f64> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(Error::invalid(format!("mass must be finite and non-negative, got {mass}")));
    }
    intensity.inverse(from, mass)
}

/// Λ(t) = ∫_reference^t λ tabulated at the bin edges of a piecewise-constant intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeIntensity {
    pub breakpoints: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub reference_time: f64,
}

impl CumulativeIntensity {
    pub fn new(intensity: &PiecewiseConstant, reference_time: f64) -> Self {
        let n = intensity.len();
        let breakpoints: Vec<f64> = (0..=n).map(|k| intensity.origin() + k as f64 * intensity.step()).collect();
        let cumulative = breakpoints
            .iter()
            .map(|&b| {
                if b >= reference_time {
                    intensity.integrate(reference_time, b)
                } else {
                    -intensity.integrate(b, reference_time)
                }
            })
            .collect();
        Self {
            breakpoints,
            cumulative,
            reference_time,
        }
    }

    /// Λ(t) by linear interpolation; constant beyond the table.
    pub fn value(&self, t: f64) -> f64 {
        let b = &self.breakpoints;
        if t <= b[0] {
            return self.cumulative[0];
        }
        if t >= b[b.len() - 1] {
            return self.cumulative[b.len() - 1];
        }
        let k = b.partition_point(|&x| x <= t) - 1;
        let w = (t - b[k]) / (b[k + 1] - b[k]);
        self.cumulative[k] + w * (self.cumulative[k + 1] - self.cumulative[k])
    }
}

/// R×K Monte Carlo draws of the next K arrivals after `now` and of their pending times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSampleSet {
    /// Index-major: `samples[j * rows + r]` is ξ_{j+1} in row r.
    pub samples: Vec<f64>,
    pub pending: Vec<f64>,
    pub rows: usize,
    pub k: usize,
    pub now: f64,
    pub seed: u64,
}

impl ArrivalSampleSet {
    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.k).map(|j| self.samples[j * self.rows + r]).collect()
    }

    pub fn pending_row(&self, r: usize) -> Vec<f64> {
        (0..self.k).map(|j| self.pending[j * self.rows + r]).collect()
    }

    fn span(&self, i: usize) -> std::ops::Range<usize> {
        assert!(i >= 1 && i <= self.k, "index {i} outside 1..={}", self.k);
        (i - 1) * self.rows..i * self.rows
    }

    /// The R draws of ξ_i (1-based `i`).
    pub fn arrival_column(&self, i: usize) -> &[f64] {
        &self.samples[self.span(i)]
    }

    pub fn pending_column(&self, i: usize) -> &[f64] {
        &self.pending[self.span(i)]
    }

    /// The R draws of ξ_i − τ_i.
    pub fn slack_column(&self, i: usize) -> Vec<f64> {
        let s = self.span(i);
        self.samples[s.clone()].iter().zip(&self.pending[s]).map(|(x, t)| x - t).collect()
    }
}

const ROW_CHUNK: usize = 64;

/// Samples the first `k` arrivals after `now` in each of `rows` independent rows.
///
/// Row r draws its exponential gaps from stream `(seed, Arrivals, r)` and its pending times
/// from `(seed, Pending, r)`, so rows are prefix-stable in `k` and independent of `rows`.
pub fn sample_arrivals(
    intensity: &dyn Intensity,
    now: f64,
    k: usize,
    rows: usize,
    pending_model: &ServiceTimeModel,
    seed: u64,
    exec: Execution,
) -> Result<ArrivalSampleSet> {
    if k == 0 || rows == 0 {
        return Err(Error::invalid("sample_arrivals needs K >= 1 and R >= 1"));
    }
    pending_model.validate()?;
    let draw = |r: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = stream(seed, Domain::Arrivals, r as u64);
        let mut t = now;
        let mut xi = Vec::with_capacity(k);
        for _ in 0..k {
            let gap: f64 = Exp1.sample(&mut rng);
            t = intensity.inverse(t, gap)?;
            xi.push(t);
        }
        let mut rng = stream(seed, Domain::Pending, r as u64);
        let tau = (0..k).map(|_| pending_model.sample(&mut rng)).collect();
        Ok((xi, tau))
    };
    let mut samples = vec![0.0; rows * k];
    let mut pending = vec![0.0; rows * k];
    // rows come in chunks so the row-major scratch stays small next to the output
    for lo in (0..rows).step_by(ROW_CHUNK) {
        let hi = (lo + ROW_CHUNK).min(rows);
        for (r, row) in (lo..hi).zip(exec.map_indexed(hi - lo, |i| draw(lo + i))) {
            let (xi, tau) = row?;
            for (j, (x, t)) in xi.into_iter().zip(tau).enumerate() {
                samples[j * rows + r] = x;
                pending[j * rows + r] = t;
            }
        }
    }
    Ok(ArrivalSampleSet {
        samples,
        pending,
        rows,
        k,
        now,
        seed,
    })
}

/// Exact p-quantile of the i-th arrival after `now`.
pub fn arrival_quantile(intensity: &dyn Intensity, now: f64, i: usize, p: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::invalid("arrival index must be at least 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    intensity.inverse(now, gamma_quantile(i, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(rate: f64) -> PiecewiseConstant {
        PiecewiseConstant::constant(rate, 0.0, 1e6).unwrap()
    }

    #[test]
    fn integrate_examples() {
        assert_eq!(integrate(&flat(2.0), 0.0, 3.0).unwrap(), 6.0);
        let steps = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(integrate(&steps, 0.0, 1.5).unwrap(), 2.0);
        assert_eq!(integrate(&steps, 0.7, 0.7).unwrap(), 0.0);
        assert!(integrate(&steps, 1.0, 0.5).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_integrate(&flat(2.0), 0.0, 6.0).unwrap(), 3.0);
        assert_eq!(inverse_integrate(&flat(2.0), 4.0, 0.0).unwrap(), 4.0);
        let steps = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(inverse_integrate(&steps, 0.0, 2.0).unwrap(), 1.5);
        assert!(matches!(
            inverse_integrate(&steps, 0.0, 10.0),
            Err(Error::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn cumulative_table() {
        let steps = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 2.0, 0.5]).unwrap();
        let c = CumulativeIntensity::new(&steps, 1.0);
        assert_eq!(c.value(1.0), 0.0);
        assert_eq!(c.value(0.0), -1.0);
        assert_eq!(c.value(1.5), 1.0);
        assert_eq!(c.value(3.0), 2.5);
        assert!(c.cumulative.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sample_means_match_gamma_means() {
        let pm = ServiceTimeModel::fixed(1.0).unwrap();
        let s = sample_arrivals(&flat(1.0), 10.0, 2, 100_000, &pm, 42, Execution::default()).unwrap();
        let mean = |v: &[f64]| v.iter().map(|x| x - 10.0).sum::<f64>() / v.len() as f64;
        assert!((mean(s.arrival_column(1)) - 1.0).abs() < 0.02);
        assert!((mean(s.arrival_column(2)) - 2.0).abs() < 0.03);
        for r in 0..100 {
            let row = s.row(r);
            assert!(row[0] > 10.0 && row[0] < row[1]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let pm = ServiceTimeModel::exponential(3.0).unwrap();
        let a = sample_arrivals(&flat(1.5), 0.0, 5, 50, &pm, 7, Execution::Sequential).unwrap();
        let b = sample_arrivals(&flat(1.5), 0.0, 5, 50, &pm, 7, Execution::default()).unwrap();
        assert_eq!(a, b);
        let longer = sample_arrivals(&flat(1.5), 0.0, 8, 60, &pm, 7, Execution::default()).unwrap();
        for r in 0..50 {
            assert_eq!(a.row(r), longer.row(r)[..5]);
            assert_eq!(a.pending_row(r), longer.pending_row(r)[..5]);
        }
        let other = sample_arrivals(&flat(1.5), 0.0, 5, 50, &pm, 8, Execution::default()).unwrap();
        assert_ne!(a.samples, other.samples);
    }

    #[test]
    fn sampling_past_the_horizon_fails() {
        let short = PiecewiseConstant::constant(1.0, 0.0, 5.0).unwrap();
        let pm = ServiceTimeModel::fixed(1.0).unwrap();
        assert!(matches!(
            sample_arrivals(&short, 0.0, 100, 10, &pm, 1, Execution::default()),
            Err(Error::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn quantile_examples() {
        let q = arrival_quantile(&flat(1.0), 5.0, 1, 0.5).unwrap();
        assert!((q - 5.0 - 2f64.ln()).abs() < 1e-9);
        let q = arrival_quantile(&flat(1.0), 5.0, 1, 0.1).unwrap();
        assert!((q - 5.0 - 0.10536051565782636).abs() < 1e-9);
        for i in [1, 3, 10] {
            let one = arrival_quantile(&flat(1.0), 0.0, i, 0.4).unwrap();
            let two = arrival_quantile(&flat(2.0), 0.0, i, 0.4).unwrap();
            assert!((two - one / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_cdf_at_exact_quantile() {
        let lam = PiecewiseConstant::new(0.0, 10.0, (0..200).map(|k| 0.5 + (k % 7) as f64 * 0.3).collect()).unwrap();
        let pm = ServiceTimeModel::fixed(0.0).unwrap();
        let rows = 20_000;
        let s = sample_arrivals(&lam, 13.0, 6, rows, &pm, 99, Execution::default()).unwrap();
        for i in [1, 3, 6] {
            for p in [0.1, 0.5, 0.9] {
                let q = arrival_quantile(&lam, 13.0, i, p).unwrap();
                let frac = s.arrival_column(i).iter().filter(|&&x| x <= q).count() as f64 / rows as f64;
                let band = 3.0 * (p * (1.0 - p) / rows as f64).sqrt();
                assert!((frac - p).abs() <= band, "i={i} p={p}: {frac}");
            }
        }
    }
}
