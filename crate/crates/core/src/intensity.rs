//! Arrival-rate functions λ(t) with exact or quadrature-backed cumulative intensity.
//!
//! [`PiecewiseConstant`] is the representation used everywhere downstream of training: the
//! fitted model is piecewise constant per Δt bin, so integrals and their inverses are exact.
//! [`FnIntensity`] wraps an arbitrary closure for synthetic trace generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-negative arrival rate with a cumulative intensity Λ and its inverse.
///
/// Every implementation has a bounded support `[support_start, support_end)`; the rate is
/// zero outside of it, so inverting past the end fails with [`Error::HorizonExhausted`].
pub trait Intensity: Sync {
    fn rate(&self, t: f64) -> f64;

    /// ∫_a^b λ(t) dt for `a <= b`.
    fn integrate(&self, a: f64, b: f64) -> f64;

    /// Smallest `t >= from` with ∫_from^t λ = `mass`.
    fn inverse(&self, from: f64, mass: f64) -> Result<f64>;

    fn support_start(&self) -> f64;

    fn support_end(&self) -> f64;

    /// Upper bound on the rate over `[a, b)`.
    fn max_rate(&self, a: f64, b: f64) -> f64;
}

/// λ(t) = `rates[k]` on `[origin + k·step, origin + (k+1)·step)`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    origin: f64,
    step: f64,
    rates: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(origin: f64, step: f64, rates: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("bin width must be positive, got {step}")));
        }
        if !origin.is_finite() {
            return Err(Error::invalid("origin must be finite"));
        }
        if rates.is_empty() {
            return Err(Error::invalid("piecewise intensity needs at least one bin"));
        }
        if let Some(k) = rates.iter().position(|r| !r.is_finite() || *r < 0.0) {
            let t = origin + k as f64 * step;
            return Err(if rates[k].is_finite() {
                Error::invalid(format!("negative rate {} at t={t}", rates[k]))
            } else {
                Error::NonFiniteIntensity(t)
            });
        }
        let mut cumulative = Vec::with_capacity(rates.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for r in &rates {
            acc += r * step;
            cumulative.push(acc);
        }
        Ok(Self {
            origin,
            step,
            rates,
            cumulative,
        })
    }

    /// A single bin of constant `rate` on `[start, end)`.
    pub fn constant(rate: f64, start: f64, end: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::invalid(format!("empty support [{start}, {end})")));
        }
        Self::new(start, end - start, vec![rate])
    }

    /// Bin averages of `f` over `n` bins of width `step`, by 5-point Gauss–Legendre on each bin.
    pub fn from_fn_bins(f: impl Fn(f64) -> f64, origin: f64, step: f64, n: usize) -> Result<Self> {
        let rates = (0..n)
            .map(|k| {
                let a = origin + k as f64 * step;
                gauss_legendre(&f, a, a + step) / step
            })
            .collect();
        Self::new(origin, step, rates)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Total mass over the support.
    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// The same breakpoints with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.origin,
            self.step,
            self.rates.iter().map(|r| r * factor).collect(),
        )
    }

    /// Rebuilds the cumulative table after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        Self::new(self.origin, self.step, self.rates)
    }

    fn end(&self) -> f64 {
        self.origin + self.rates.len() as f64 * self.step
    }

    fn bin_of(&self, t: f64) -> Option<usize> {
        if t < self.origin {
            return None;
        }
        let k = ((t - self.origin) / self.step).floor() as usize;
        (k < self.rates.len()).then_some(k)
    }

    /// Λ(t) measured from the origin.
    fn cumulative_at(&self, t: f64) -> f64 {
        if t <= self.origin {
            return 0.0;
        }
        match self.bin_of(t) {
            Some(k) => {
                let left = self.origin + k as f64 * self.step;
                self.cumulative[k] + self.rates[k] * (t - left)
            }
            None => self.total_mass(),
        }
    }
}

impl Intensity for PiecewiseConstant {
    fn rate(&self, t: f64) -> f64 {
        self.bin_of(t).map_or(0.0, |k| self.rates[k])
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cumulative_at(b) - self.cumulative_at(a)).max(0.0)
    }

    fn inverse(&self, from: f64, mass: f64) -> Result<f64> {
        if !(mass >= 0.0) {
            return Err(Error::invalid(format!("mass must be non-negative, got {mass}")));
        }
        if mass == 0.0 {
            return Ok(from);
        }
        let base = self.cumulative_at(from);
        let target = base + mass;
        let total = self.total_mass();
        if target > total {
            return Err(Error::HorizonExhausted {
                requested: mass,
                available: total - base,
                horizon_end: self.end(),
            });
        }
        // first k with cumulative[k] >= target; bin k-1 has positive rate by minimality
        let k = self.cumulative.partition_point(|c| *c < target);
        let bin = k.saturating_sub(1).min(self.rates.len() - 1);
        let left = self.origin + bin as f64 * self.step;
        let t = left + (target - self.cumulative[bin]) / self.rates[bin];
        Ok(t.max(from).min(left + self.step))
    }

    fn support_start(&self) -> f64 {
        self.origin
    }

    fn support_end(&self) -> f64 {
        self.end()
    }

    fn max_rate(&self, a: f64, b: f64) -> f64 {
        let lo = if a <= self.origin { 0 } else { self.bin_of(a).unwrap_or(self.rates.len()) };
        let hi = if b >= self.end() {
            self.rates.len()
        } else {
            self.bin_of(b).map_or(0, |k| k + 1)
        };
        self.rates[lo.min(hi)..hi].iter().copied().fold(0.0, f64::max)
    }
}

/// An arbitrary rate function on `[start, end)`, integrated by composite Gauss–Legendre over
/// fixed cells with a precomputed cumulative table. Inversion inside a cell uses safeguarded
/// Newton iterations to [`FnIntensity::TIME_TOLERANCE`].
pub struct FnIntensity<F> {
    f: F,
    start: f64,
    end: f64,
    cell: f64,
    cumulative: Vec<f64>,
    cell_max: Vec<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> FnIntensity<F> {
    pub const TIME_TOLERANCE: f64 = 1e-9;
    const MAX_CELLS: usize = 4_000_000;

    /// Builds the table with cells of roughly one second (coarser for very long spans).
    pub fn new(f: F, start: f64, end: f64) -> Result<Self> {
        let span = end - start;
        let cells = (span.ceil() as usize).clamp(1, Self::MAX_CELLS);
        Self::with_cells(f, start, end, cells)
    }

    pub fn with_cells(f: F, start: f64, end: f64, cells: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::invalid(format!("empty support [{start}, {end})")));
        }
        let cells = cells.max(1);
        let cell = (end - start) / cells as f64;
        let mut cumulative = Vec::with_capacity(cells + 1);
        let mut cell_max = Vec::with_capacity(cells);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for c in 0..cells {
            let a = start + c as f64 * cell;
            let mut hi: f64 = 0.0;
            for node in PROBES {
                let t = a + 0.5 * cell * (node + 1.0);
                let v = f(t);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntensity(t));
                }
                if v < 0.0 {
                    return Err(Error::invalid(format!("negative rate {v} at t={t}")));
                }
                hi = hi.max(v);
            }
            acc += gauss_legendre(&f, a, a + cell);
            cumulative.push(acc);
            cell_max.push(hi);
        }
        Ok(Self {
            f,
            start,
            end,
            cell,
            cumulative,
            cell_max,
        })
    }

    fn cell_of(&self, t: f64) -> usize {
        (((t - self.start) / self.cell).floor().max(0.0) as usize).min(self.cell_max.len() - 1)
    }

    fn cumulative_at(&self, t: f64) -> f64 {
        if t <= self.start {
            return 0.0;
        }
        if t >= self.end {
            return *self.cumulative.last().unwrap();
        }
        let c = self.cell_of(t);
        let a = self.start + c as f64 * self.cell;
        self.cumulative[c] + gauss_legendre(&self.f, a, t)
    }
}

impl<F: Fn(f64) -> f64 + Sync> Intensity for FnIntensity<F> {
    fn rate(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            0.0
        } else {
            (self.f)(t)
        }
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cumulative_at(b) - self.cumulative_at(a)).max(0.0)
    }

    fn inverse(&self, from: f64, mass: f64) -> Result<f64> {
        if !(mass >= 0.0) {
            return Err(Error::invalid(format!("mass must be non-negative, got {mass}")));
        }
        if mass == 0.0 {
            return Ok(from);
        }
        let base = self.cumulative_at(from);
        let target = base + mass;
        let total = *self.cumulative.last().unwrap();
        if target > total {
            return Err(Error::HorizonExhausted {
                requested: mass,
                available: total - base,
                horizon_end: self.end,
            });
        }
        let k = self.cumulative.partition_point(|c| *c < target);
        let c = k.saturating_sub(1).min(self.cell_max.len() - 1);
        let a = self.start + c as f64 * self.cell;
        let b = a + self.cell;
        let need = target - self.cumulative[c];
        // g(t) = ∫_a^t f - need is non-decreasing on [a, b]; bracket and refine
        let (mut lo, mut hi) = (a.max(from).min(b), b);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = gauss_legendre(&self.f, a, t) - need;
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = (self.f)(t);
            let newton = t - g / slope;
            t = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < Self::TIME_TOLERANCE || g.abs() < 1e-13 * need.max(1.0) {
                break;
            }
        }
        Ok(t.max(from))
    }

    fn support_start(&self) -> f64 {
        self.start
    }

    fn support_end(&self) -> f64 {
        self.end
    }

    fn max_rate(&self, a: f64, b: f64) -> f64 {
        let lo = self.cell_of(a.max(self.start));
        let hi = self.cell_of(b.min(self.end));
        self.cell_max[lo..=hi].iter().copied().fold(0.0, f64::max)
    }
}

const GL_NODES: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

// rate probes per cell (GL nodes plus both endpoints), used for the max-rate table
const PROBES: [f64; 7] = [
    -1.0,
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
    1.0,
];

pub(crate) fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * GL_NODES.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rectangle_integrals() {
        let two = PiecewiseConstant::constant(2.0, 0.0, 100.0).unwrap();
        assert_abs_diff_eq!(two.integrate(0.0, 3.0), 6.0, epsilon = 1e-12);
        assert_eq!(two.integrate(1.5, 1.5), 0.0);
        let steps = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(steps.integrate(0.0, 1.5), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_of_rectangles() {
        let two = PiecewiseConstant::constant(2.0, 0.0, 100.0).unwrap();
        assert_abs_diff_eq!(two.inverse(0.0, 6.0).unwrap(), 3.0, epsilon = 1e-12);
        assert_eq!(two.inverse(4.2, 0.0).unwrap(), 4.2);
        let steps = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(steps.inverse(0.0, 2.0).unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn inverse_skips_zero_rate_gaps() {
        let gap = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(gap.inverse(0.5, 0.75).unwrap(), 3.25, epsilon = 1e-12);
    }

    #[test]
    fn unreachable_mass_is_an_error() {
        let one = PiecewiseConstant::constant(1.0, 0.0, 10.0).unwrap();
        assert!(matches!(
            one.inverse(5.0, 6.0),
            Err(Error::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(PiecewiseConstant::new(0.0, 1.0, vec![1.0, f64::NAN]).is_err());
        assert!(PiecewiseConstant::new(0.0, 1.0, vec![-1.0]).is_err());
        assert!(PiecewiseConstant::new(0.0, 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn max_rate_over_window() {
        let p = PiecewiseConstant::new(0.0, 1.0, vec![1.0, 5.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.max_rate(0.0, 4.0), 5.0);
        assert_eq!(p.max_rate(2.0, 2.5), 2.0);
        assert_eq!(p.max_rate(2.5, 10.0), 3.0);
    }

    #[test]
    fn closure_intensity_matches_closed_form() {
        let lin = FnIntensity::new(|t: f64| 1.0 + t, 0.0, 10.0).unwrap();
        // ∫_0^4 (1+t) dt = 12
        assert_abs_diff_eq!(lin.integrate(0.0, 4.0), 12.0, epsilon = 1e-10);
        let t = lin.inverse(0.0, 12.0).unwrap();
        assert_abs_diff_eq!(t, 4.0, epsilon = 1e-9);
        let t = lin.inverse(1.3, lin.integrate(1.3, 7.7)).unwrap();
        assert_abs_diff_eq!(t, 7.7, epsilon = 1e-9);
    }

    #[test]
    fn closure_intensity_rejects_non_finite() {
        assert!(matches!(
            FnIntensity::new(|t: f64| if t > 3.0 { f64::INFINITY } else { 1.0 }, 0.0, 10.0),
            Err(Error::NonFiniteIntensity(_))
        ));
    }
}
