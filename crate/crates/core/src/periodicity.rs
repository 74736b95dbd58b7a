//! Dominant-period detection on an aggregated count series.
//!
//! The series is linearly detrended, its autocorrelation is computed up to `max_period + 1`
//! lags, and local ACF maxima that clear a family-wise 99% white-noise band are candidates.
//! Candidates are ranked by prominence (peak height above the deepest trough at a smaller
//! lag); near-ties go to the smallest lag whose multiples are also significant. The winner
//! must agree with the periodogram's dominant frequency (as the fundamental or a harmonic).

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::trace::QpsSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodInfo {
    pub detected: bool,
    /// Period length in bins; 0 when nothing was detected.
    pub period_bins: usize,
    /// Confidence in [0, 1], increasing in peak prominence.
    pub score: f64,
}

impl PeriodInfo {
    pub const NONE: PeriodInfo = PeriodInfo {
        detected: false,
        period_bins: 0,
        score: 0.0,
    };

    /// A user-forced period.
    pub fn forced(period_bins: usize) -> Self {
        Self {
            detected: true,
            period_bins,
            score: 1.0,
        }
    }

    pub fn period(&self) -> Option<usize> {
        self.detected.then_some(self.period_bins)
    }
}

/// Family-wise false-alarm rate of the white-noise band.
pub const SIGNIFICANCE: f64 = 0.01;

// candidates within this fraction of the best prominence are treated as tied
const TIE_FRACTION: f64 = 0.9;

pub fn detect_period(series: &QpsSeries, max_period: usize) -> Result<PeriodInfo> {
    detect_period_values(&series.as_f64(), max_period)
}

/// [`detect_period`] on raw values.
pub fn detect_period_values(values: &[f64], max_period: usize) -> Result<PeriodInfo> {
    let n = values.len();
    if max_period < 2 {
        return Err(Error::invalid(format!("max_period must be at least 2, got {max_period}")));
    }
    if n < 2 * max_period + 1 {
        return Err(Error::SeriesTooShort {
            need: 2 * max_period + 1,
            got: n,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }

    let x = detrend(values);
    let var: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var <= 1e-12 * (1.0 + mean_abs(values).powi(2)) {
        return Ok(PeriodInfo::NONE);
    }
    let acf = autocorrelation(&x, max_period + 1);

    let lags_tested = (max_period - 1) as f64;
    let z = Normal::standard().inverse_cdf(1.0 - SIGNIFICANCE / (2.0 * lags_tested));
    let band = z / (n as f64).sqrt();

    // (lag, prominence) for significant local maxima
    let mut candidates = Vec::new();
    let mut trough = acf[1];
    for k in 2..=max_period {
        trough = trough.min(acf[k - 1]);
        let is_peak = acf[k] >= acf[k - 1] && acf[k] >= acf[k + 1];
        let prominence = acf[k] - trough;
        if is_peak && acf[k] > band && prominence > band {
            candidates.push((k, prominence));
        }
    }
    let Some(best) = candidates.iter().map(|c| c.1).reduce(f64::max) else {
        return Ok(PeriodInfo::NONE);
    };
    let tied: Vec<(usize, f64)> = candidates
        .iter()
        .copied()
        .filter(|c| c.1 >= TIE_FRACTION * best)
        .collect();
    let multiples_significant = |k: usize| (2..).map(|j| j * k).take_while(|&m| m <= max_period).all(|m| acf[m] > band);
    let (lag, prominence) = tied
        .iter()
        .copied()
        .find(|&(k, _)| multiples_significant(k))
        .unwrap_or_else(|| {
            *tied
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty")
        });

    if !agrees_with_periodogram(&x, lag) {
        return Ok(PeriodInfo::NONE);
    }
    Ok(PeriodInfo {
        detected: true,
        period_bins: refine_lag(&acf, lag, max_period, n),
        score: (prominence / 2.0).clamp(0.0, 1.0),
    })
}

/// Moves `lag` by at most one bin to the neighbour whose multiples carry the highest mean
/// unbiased autocorrelation. The biased estimate decays with the lag, which pulls single peaks
/// toward shorter lags.
fn refine_lag(acf: &[f64], lag: usize, max_period: usize, n: usize) -> usize {
    let unbiased = |k: usize| acf[k] * n as f64 / (n - k) as f64;
    let score = |k: usize| {
        let m: Vec<f64> = (1..).map(|j| j * k).take_while(|&m| m <= max_period).map(unbiased).collect();
        m.iter().sum::<f64>() / m.len() as f64
    };
    (lag.saturating_sub(1).max(2)..=(lag + 1).min(max_period))
        .max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)))
        .unwrap_or(lag)
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// Residuals of a least-squares line fit.
fn detrend(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = values.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, y) in values.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    values
        .iter()
        .enumerate()
        .map(|(t, y)| y - y_mean - slope * (t as f64 - t_mean))
        .collect()
}

/// Biased sample autocorrelation r(0..=max_lag) of a zero-mean series.
pub(crate) fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let c0: f64 = x.iter().map(|v| v * v).sum();
    (0..=max_lag.min(n - 1))
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect()
}

/// True if `lag` is within resolution of an integer multiple of the periodogram's dominant
/// period (so the dominant frequency is the fundamental or one of its harmonics).
fn agrees_with_periodogram(x: &[f64], lag: usize) -> bool {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let Some((f_star, _)) = buf[1..=n / 2]
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.norm_sqr()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
    else {
        return false;
    };
    let dominant = n as f64 / f_star as f64;
    let lag = lag as f64;
    let j = (lag / dominant).round().max(1.0);
    // a one-bin frequency error moves the period by about lag²/n
    let tol = (1.0f64).max(0.05 * lag + lag * lag / n as f64);
    (lag - j * dominant).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as NormalDist, Poisson};
    use std::f64::consts::PI;

    fn sinusoid(n: usize, period: f64, amp: f64) -> Vec<f64> {
        (0..n).map(|t| 10.0 + amp * (2.0 * PI * t as f64 / period).sin()).collect()
    }

    // brute-force oracle on a noiseless signal: the lag of the highest ACF value among
    // interior local maxima
    fn acf_peak_oracle(values: &[f64], max_lag: usize) -> usize {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let x: Vec<f64> = values.iter().map(|v| v - m).collect();
        let r = autocorrelation(&x, max_lag + 1);
        (2..=max_lag)
            .filter(|&k| r[k] >= r[k - 1] && r[k] >= r[k + 1])
            .max_by(|&a, &b| r[a].total_cmp(&r[b]))
            .unwrap()
    }

    #[test]
    fn pure_sinusoid() {
        let v = sinusoid(480, 24.0, 3.0);
        let oracle = acf_peak_oracle(&v, 60);
        assert_eq!(oracle, 24);
        let p = detect_period_values(&v, 60).unwrap();
        assert!(p.detected);
        assert_eq!(p.period_bins, oracle);
        assert!(p.score > 0.5 && p.score <= 1.0);
    }

    #[test]
    fn constant_series_has_no_period() {
        let p = detect_period_values(&vec![7.0; 300], 50).unwrap();
        assert_eq!(p, PeriodInfo::NONE);
    }

    #[test]
    fn poisson_noise_has_no_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pois = Poisson::new(5.0).unwrap();
        let v: Vec<f64> = (0..2000).map(|_| pois.sample(&mut rng)).collect();
        assert!(!detect_period_values(&v, 200).unwrap().detected);
    }

    #[test]
    fn white_noise_false_alarm_rate() {
        let pois = Poisson::new(5.0).unwrap();
        let mut alarms = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..2000).map(|_| pois.sample(&mut rng)).collect();
            alarms += detect_period_values(&v, 200).unwrap().detected as usize;
        }
        // nominal 1%; allow sampling slack on 200 trials
        assert!(alarms <= 6, "{alarms} false alarms out of 200");
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = NormalDist::new(0.0, 1.0).unwrap();
        let v: Vec<f64> = sinusoid(600, 30.0, 3.0)
            .into_iter()
            .map(|x| x + noise.sample(&mut rng))
            .collect();
        let base = detect_period_values(&v, 80).unwrap();
        for c in [0.01, 3.0, 1e4] {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            assert_eq!(detect_period_values(&scaled, 80).unwrap().period_bins, base.period_bins);
        }
    }

    #[test]
    fn recovers_period_at_snr_four() {
        // SNR = signal variance / noise variance = (A²/2)/σ²
        let sigma = 1.0;
        let amp = (8.0f64).sqrt() * sigma;
        let noise = NormalDist::new(0.0, sigma).unwrap();
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let v: Vec<f64> = sinusoid(480, 24.0, amp)
                .into_iter()
                .map(|x| x + noise.sample(&mut rng))
                .collect();
            let p = detect_period_values(&v, 60).unwrap();
            hits += (p.detected && p.period_bins == 24) as usize;
        }
        assert!(hits >= 95, "recovered {hits}/100");
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            detect_period_values(&[1.0; 50], 30),
            Err(Error::SeriesTooShort { .. })
        ));
    }
}
