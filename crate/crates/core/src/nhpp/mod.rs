//! Periodicity-regularized NHPP intensity estimation.
//!
//! The log-intensity `r` (one value per Δt bin) minimizes
//!
//! ```text
//! −Qᵀr + Δt·1ᵀexp(r) + β₁‖D²r‖₁ + (β₂/2)‖D_L r‖²
//! ```
//!
//! by a linearized ADMM: splitting `y = D²r`, `z = D_L r`, the exponential term of the
//! augmented Lagrangian is replaced by its second-order Taylor expansion at the current `r`,
//! which turns the r-update into one SPD banded linear system per iteration.

mod banded;
mod ops;

use serde::{Deserialize, Serialize};

pub use banded::{BandedCholesky, BandedSpd};
pub use ops::{lag_diff, lag_diff_t, second_diff, second_diff_t};

use crate::error::{Error, Result};
use crate::intensity::PiecewiseConstant;
use crate::periodicity::PeriodInfo;
use crate::trace::QpsSeries;
use ops::norm2;

/// Which linear solver handles the r-update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky when `T·p²` is small, otherwise preconditioned CG.
    #[default]
    Auto,
    Banded,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub r_floor: f64,
    #[serde(default)]
    pub solver: LinearSolver,
    /// Rescale ρ by 2 every few iterations while one residual dominates the other by 10×.
    #[serde(default = "default_true")]
    pub adaptive_rho: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 10.0,
            beta2: 1.0,
            rho: 1.0,
            max_iters: 500,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            r_floor: -20.0,
            solver: LinearSolver::Auto,
            adaptive_rho: true,
        }
    }
}

impl TrainConfig {
    pub fn unregularized() -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err(Error::invalid("beta1 and beta2 must be non-negative"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !self.r_floor.is_finite() {
            return Err(Error::invalid("r_floor must be finite"));
        }
        Ok(())
    }
}

/// How a model extends past the end of its training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Extrapolation {
    /// Repeat the last full period, phase-aligned.
    PeriodicTiling { period_bins: usize },
    /// Hold the mean rate of the last `window` bins.
    TrailingMean { window: usize },
}

/// Default trailing window for aperiodic extrapolation, in bins.
pub const TRAILING_WINDOW: usize = 60;

/// Default extrapolation cap for [`predict_intensity`]: 24 hours.
pub const DEFAULT_HORIZON_CAP: f64 = 86_400.0;

/// A fitted log-intensity, one value per bin starting at `epoch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub step: f64,
    pub epoch: f64,
    pub period_bins: Option<usize>,
    pub log_intensity: Vec<f64>,
    pub extrapolation: Extrapolation,
}

impl IntensityModel {
    pub fn new(log_intensity: Vec<f64>, step: f64, epoch: f64, period_bins: Option<usize>) -> Result<Self> {
        let extrapolation = match period_bins {
            Some(l) => Extrapolation::PeriodicTiling { period_bins: l },
            None => Extrapolation::TrailingMean { window: TRAILING_WINDOW },
        };
        let model = Self {
            step,
            epoch,
            period_bins,
            log_intensity,
            extrapolation,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.log_intensity.len();
        if t == 0 {
            return Err(Error::invalid("model has no bins"));
        }
        if !(self.step > 0.0) {
            return Err(Error::invalid("model step must be positive"));
        }
        if self.log_intensity.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("log-intensity must be finite"));
        }
        if let Some(l) = self.period_bins {
            if l < 2 || l >= t {
                return Err(Error::invalid(format!("period {l} must satisfy 2 <= L < T={t}")));
            }
        }
        match self.extrapolation {
            Extrapolation::PeriodicTiling { period_bins } if period_bins < 2 || period_bins > t => {
                Err(Error::invalid("tiling period out of range"))
            }
            Extrapolation::TrailingMean { window: 0 } => Err(Error::invalid("trailing window must be positive")),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.log_intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_intensity.is_empty()
    }

    /// In-sample rates e^{r_t}.
    pub fn rates(&self) -> Vec<f64> {
        self.log_intensity.iter().map(|r| r.exp()).collect()
    }

    /// End of the training window.
    pub fn end(&self) -> f64 {
        self.epoch + self.len() as f64 * self.step
    }

    /// Rate of bin `b` (bins counted from `epoch`); bins past the window are extrapolated.
    pub fn rate_of_bin(&self, b: usize) -> f64 {
        let t = self.len();
        if b < t {
            return self.log_intensity[b].exp();
        }
        match self.extrapolation {
            Extrapolation::PeriodicTiling { period_bins } => {
                let l = period_bins;
                self.log_intensity[t - l + (b - t) % l].exp()
            }
            Extrapolation::TrailingMean { window } => {
                let w = window.min(t);
                self.log_intensity[t - w..].iter().map(|r| r.exp()).sum::<f64>() / w as f64
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

/// Objective value of the regularized loss at `r`.
pub fn loss(series: &QpsSeries, r: &[f64], config: &TrainConfig, period: Option<usize>) -> Result<f64> {
    let n = series.len();
    if r.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: r.len() });
    }
    let dt = series.step();
    let mut value: f64 = series
        .counts()
        .iter()
        .zip(r)
        .map(|(&q, &ri)| -(q as f64) * ri + dt * ri.exp())
        .sum();
    if config.beta1 > 0.0 && n >= 3 {
        value += config.beta1 * second_diff(r).iter().map(|v| v.abs()).sum::<f64>();
    }
    if config.beta2 > 0.0 {
        let l = period.ok_or_else(|| Error::invalid("beta2 > 0 requires a period"))?;
        if l == 0 || l >= n {
            return Err(Error::invalid(format!("period {l} must be below T={n}")));
        }
        value += 0.5 * config.beta2 * lag_diff(r, l).iter().map(|v| v * v).sum::<f64>();
    }
    Ok(value)
}

/// SoftThreshold(x, c) = sign(x)·max(|x| − c, 0).
pub fn soft_threshold(x: f64, c: f64) -> f64 {
    debug_assert!(c >= 0.0);
    if x > c {
        x - c
    } else if x < -c {
        x + c
    } else {
        0.0
    }
}

/// Iterates of the ADMM scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub nu_y: Vec<f64>,
    pub nu_z: Vec<f64>,
    pub iteration: usize,
    pub primal_residual_y: f64,
    pub primal_residual_z: f64,
    pub dual_residual: f64,
    pub step_norm: f64,
    /// Current penalty; moves away from the configured ρ only with `adaptive_rho`.
    pub rho: f64,
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// Scaled primal residual max(‖y − D²r‖/√(T−2), ‖z − D_L r‖/√(T−L)).
    pub primal_residual: f64,
    /// Scaled dual residual ρ‖D²ᵀΔy + D_LᵀΔz‖/√T.
    pub dual_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub model: IntensityModel,
    pub report: ConvergenceReport,
    pub state: AdmmState,
}

const RHO_UPDATE_EVERY: usize = 10;
const RHO_BALANCE: f64 = 10.0;
// ρ is frozen afterwards so the usual fixed-penalty convergence applies
const RHO_UPDATE_LIMIT: usize = 2000;

// banded Cholesky is used while T·p² stays below this
const BANDED_WORK_LIMIT: f64 = 5e7;

/// One ADMM run over a fixed series.
pub struct AdmmSolver<'a> {
    counts: Vec<f64>,
    step: f64,
    config: &'a TrainConfig,
    period: Option<usize>,
    use_banded: bool,
    state: AdmmState,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(series: &QpsSeries, config: &'a TrainConfig, period: Option<usize>) -> Result<Self> {
        let counts = series.as_f64();
        let r0: Vec<f64> = counts
            .iter()
            .map(|q| ((q + 1.0) / series.step()).ln().max(config.r_floor))
            .collect();
        Self::with_initial(series, config, period, r0)
    }

    /// Starts from `r0` with zero duals and `y = D²r0`, `z = D_L r0`.
    pub fn with_initial(series: &QpsSeries, config: &'a TrainConfig, period: Option<usize>, r0: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n = series.len();
        if n < 3 {
            return Err(Error::SeriesTooShort { need: 3, got: n });
        }
        if r0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: r0.len() });
        }
        let period = if config.beta2 > 0.0 { period } else { None };
        if let Some(l) = period {
            if l < 2 || l >= n {
                return Err(Error::invalid(format!("period {l} must satisfy 2 <= L < T={n}")));
            }
        }
        let y = second_diff(&r0);
        let z = period.map(|l| lag_diff(&r0, l)).unwrap_or_default();
        let state = AdmmState {
            nu_y: vec![0.0; y.len()],
            nu_z: vec![0.0; z.len()],
            r: r0,
            y,
            z,
            iteration: 0,
            primal_residual_y: f64::INFINITY,
            primal_residual_z: f64::INFINITY,
            dual_residual: f64::INFINITY,
            step_norm: f64::INFINITY,
            rho: config.rho,
        };
        Self::from_state(series, config, period, state)
    }

    /// Resumes from an existing state.
    pub fn from_state(series: &QpsSeries, config: &'a TrainConfig, period: Option<usize>, state: AdmmState) -> Result<Self> {
        config.validate()?;
        let n = series.len();
        let period = if config.beta2 > 0.0 { period } else { None };
        let expected_z = period.map_or(0, |l| n - l);
        if state.r.len() != n || state.y.len() != n - 2 || state.nu_y.len() != n - 2 {
            return Err(Error::DimensionMismatch { expected: n, got: state.r.len() });
        }
        if state.z.len() != expected_z || state.nu_z.len() != expected_z {
            return Err(Error::DimensionMismatch { expected: expected_z, got: state.z.len() });
        }
        let bandwidth = period.map_or(2, |l| l.max(2)) as f64;
        let use_banded = match config.solver {
            LinearSolver::Banded => true,
            LinearSolver::ConjugateGradient => false,
            LinearSolver::Auto => n as f64 * bandwidth * bandwidth <= BANDED_WORK_LIMIT,
        };
        Ok(Self {
            counts: series.as_f64(),
            step: series.step(),
            config,
            period,
            use_banded,
            state,
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn into_state(self) -> AdmmState {
        self.state
    }

    /// Assembles A_k = Δt·diag(e^{r_k}) + ρD²ᵀD² + ρD_LᵀD_L in banded form.
    pub fn system_matrix(&self) -> BandedSpd {
        let n = self.counts.len();
        let rho = self.state.rho;
        let bw = self.period.map_or(2, |l| l.max(2));
        let mut a = BandedSpd::zeros(n, bw);
        for (i, r) in self.state.r.iter().enumerate() {
            a.add(i, i, self.step * r.exp());
        }
        let c = [1.0, -2.0, 1.0];
        for i in 0..n - 2 {
            for p in 0..3 {
                for q in 0..=p {
                    a.add(i + p, i + q, rho * c[p] * c[q]);
                }
            }
        }
        if let Some(l) = self.period {
            for i in 0..n - l {
                a.add(i, i, rho);
                a.add(i + l, i + l, rho);
                a.add(i + l, i, -rho);
            }
        }
        a
    }

    /// Right-hand side B_k.
    pub fn rhs(&self) -> Vec<f64> {
        let n = self.counts.len();
        let rho = self.state.rho;
        let s = &self.state;
        let shifted_y: Vec<f64> = s.nu_y.iter().zip(&s.y).map(|(nu, y)| nu + rho * y).collect();
        let mut b = second_diff_t(&shifted_y, n);
        if let Some(l) = self.period {
            let shifted_z: Vec<f64> = s.nu_z.iter().zip(&s.z).map(|(nu, z)| nu + rho * z).collect();
            for (bi, v) in b.iter_mut().zip(lag_diff_t(&shifted_z, l, n)) {
                *bi += v;
            }
        }
        for (i, bi) in b.iter_mut().enumerate() {
            let w = self.step * s.r[i].exp();
            *bi += self.counts[i] - w + w * s.r[i];
        }
        b
    }

    fn solve_r(&self) -> Result<Vec<f64>> {
        let b = self.rhs();
        if self.use_banded {
            Ok(self.system_matrix().cholesky()?.solve(&b))
        } else {
            self.solve_cg(&b)
        }
    }

    fn apply_system(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let rho = self.state.rho;
        let mut out = second_diff_t(&second_diff(x), n);
        if let Some(l) = self.period {
            for (o, v) in out.iter_mut().zip(lag_diff_t(&lag_diff(x, l), l, n)) {
                *o += v;
            }
        }
        for i in 0..n {
            out[i] = rho * out[i] + weights[i] * x[i];
        }
        out
    }

    // CG preconditioned by the pentadiagonal part plus the diagonal of ρD_LᵀD_L
    fn solve_cg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let rho = self.state.rho;
        let weights: Vec<f64> = self.state.r.iter().map(|r| self.step * r.exp()).collect();
        let mut pre = BandedSpd::zeros(n, 2);
        for (i, w) in weights.iter().enumerate() {
            pre.add(i, i, *w);
        }
        let c = [1.0, -2.0, 1.0];
        for i in 0..n - 2 {
            for p in 0..3 {
                for q in 0..=p {
                    pre.add(i + p, i + q, rho * c[p] * c[q]);
                }
            }
        }
        if let Some(l) = self.period {
            for i in 0..n - l {
                pre.add(i, i, rho);
                pre.add(i + l, i + l, rho);
            }
        }
        let pre = pre.cholesky()?;

        let mut x = self.state.r.clone();
        let ax = self.apply_system(&weights, &x);
        let mut res: Vec<f64> = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
        let target = 1e-13 * norm2(b).max(1e-300);
        let mut z = pre.solve(&res);
        let mut p = z.clone();
        let mut rz: f64 = res.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..(4 * n).max(100) {
            if norm2(&res) <= target {
                break;
            }
            let ap = self.apply_system(&weights, &p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(Error::SingularSystem(0));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                res[i] -= alpha * ap[i];
            }
            z = pre.solve(&res);
            let rz_new: f64 = res.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Ok(x)
    }

    /// One iteration: r-, y-, z-updates followed by the dual ascent steps.
    pub fn step(&mut self) -> Result<()> {
        let n = self.counts.len();
        let rho = self.state.rho;
        let mut r_new = self.solve_r()?;
        for r in r_new.iter_mut() {
            *r = r.max(self.config.r_floor);
        }
        let d2r = second_diff(&r_new);
        let thresh = self.config.beta1 / rho;
        let y_new: Vec<f64> = d2r
            .iter()
            .zip(&self.state.nu_y)
            .map(|(d, nu)| soft_threshold(d - nu / rho, thresh))
            .collect();

        let s = &mut self.state;
        let mut dual = second_diff_t(
            &y_new.iter().zip(&s.y).map(|(a, b)| a - b).collect::<Vec<_>>(),
            n,
        );
        for ((nu, y), d) in s.nu_y.iter_mut().zip(&y_new).zip(&d2r) {
            *nu += rho * (y - d);
        }
        s.primal_residual_y = norm2(&y_new.iter().zip(&d2r).map(|(a, b)| a - b).collect::<Vec<_>>()) / ((n - 2) as f64).sqrt();

        if let Some(l) = self.period {
            let dlr = lag_diff(&r_new, l);
            let z_new: Vec<f64> = dlr
                .iter()
                .zip(&s.nu_z)
                .map(|(d, nu)| (rho * d - nu) / (self.config.beta2 + rho))
                .collect();
            let dz: Vec<f64> = z_new.iter().zip(&s.z).map(|(a, b)| a - b).collect();
            for (dv, v) in dual.iter_mut().zip(lag_diff_t(&dz, l, n)) {
                *dv += v;
            }
            for ((nu, z), d) in s.nu_z.iter_mut().zip(&z_new).zip(&dlr) {
                *nu += rho * (z - d);
            }
            s.primal_residual_z = norm2(&z_new.iter().zip(&dlr).map(|(a, b)| a - b).collect::<Vec<_>>()) / ((n - l) as f64).sqrt();
            s.z = z_new;
        } else {
            s.primal_residual_z = 0.0;
        }
        s.dual_residual = rho * norm2(&dual) / (n as f64).sqrt();
        s.step_norm = norm2(&r_new.iter().zip(&s.r).map(|(a, b)| a - b).collect::<Vec<_>>()) / (n as f64).sqrt();
        s.y = y_new;
        s.r = r_new;
        s.iteration += 1;
        // the duals are unscaled, so only the penalty itself changes
        if self.config.adaptive_rho && s.iteration.is_multiple_of(RHO_UPDATE_EVERY) && s.iteration <= RHO_UPDATE_LIMIT {
            let primal = s.primal_residual_y.max(s.primal_residual_z);
            if primal > RHO_BALANCE * s.dual_residual {
                s.rho *= 2.0;
            } else if s.dual_residual > RHO_BALANCE * primal {
                s.rho /= 2.0;
            }
        }
        Ok(())
    }

    pub fn converged(&self) -> bool {
        let s = &self.state;
        s.primal_residual_y < self.config.tol_primal
            && s.primal_residual_z < self.config.tol_primal
            && s.dual_residual < self.config.tol_dual
            && s.step_norm < self.config.tol_dual
    }

    /// Iterates until convergence or `max_iters` more iterations.
    pub fn run(&mut self) -> Result<bool> {
        for _ in 0..self.config.max_iters {
            self.step()?;
            if self.converged() {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Fits the regularized NHPP. `period` is ignored when it is not detected or when β₂ = 0.
///
/// Hitting `max_iters` is not an error: the returned report carries `converged = false` and
/// the final residuals.
pub fn train(series: &QpsSeries, config: &TrainConfig, period: Option<&PeriodInfo>) -> Result<Fit> {
    let l = period.and_then(PeriodInfo::period);
    let mut solver = AdmmSolver::new(series, config, l)?;
    let converged = solver.run()?;
    finish(series, config, l, solver, converged)
}

fn finish(series: &QpsSeries, config: &TrainConfig, l: Option<usize>, solver: AdmmSolver<'_>, converged: bool) -> Result<Fit> {
    let used_period = solver.period;
    let state = solver.into_state();
    // without a period the periodic term was never part of the problem
    let objective = match used_period {
        Some(_) => loss(series, &state.r, config, used_period)?,
        None => loss(series, &state.r, &TrainConfig { beta2: 0.0, ..config.clone() }, None)?,
    };
    let report = ConvergenceReport {
        iterations: state.iteration,
        converged,
        primal_residual: state.primal_residual_y.max(state.primal_residual_z),
        dual_residual: state.dual_residual,
        objective,
    };
    if !converged {
        log::warn!(
            "ADMM stopped at {} iterations without converging (primal {:.3e}, dual {:.3e})",
            report.iterations,
            report.primal_residual,
            report.dual_residual
        );
    }
    // tiling needs a detected period even when the periodic penalty is off
    let model = IntensityModel::new(state.r.clone(), series.step(), series.epoch(), l)?;
    Ok(Fit { model, report, state })
}

/// Predicted intensity over `[from, from + horizon)` with the default 24 h cap.
pub fn predict_intensity(model: &IntensityModel, from: f64, horizon: f64) -> Result<PiecewiseConstant> {
    predict_intensity_capped(model, from, horizon, DEFAULT_HORIZON_CAP)
}

/// Predicted intensity as a piecewise-constant function on the model's bin grid. The returned
/// support starts at the bin edge at or before `from` and covers at least `from + horizon`.
/// Bins inside the training window use the fitted rates.
pub fn predict_intensity_capped(model: &IntensityModel, from: f64, horizon: f64, cap: f64) -> Result<PiecewiseConstant> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if horizon > cap {
        return Err(Error::HorizonCap { requested: horizon, cap });
    }
    if from < model.epoch {
        return Err(Error::invalid(format!("from={from} precedes the model epoch {}", model.epoch)));
    }
    let first = ((from - model.epoch) / model.step).floor() as usize;
    let last = ((from + horizon - model.epoch) / model.step).ceil() as usize;
    let rates: Vec<f64> = (first..last.max(first + 1)).map(|b| model.rate_of_bin(b)).collect();
    PiecewiseConstant::new(model.epoch + first as f64 * model.step, model.step, rates)
}

/// Mean Poisson negative log-likelihood (up to the log Q! constant) of `counts` under `rates`.
pub fn poisson_nll(counts: &[u64], rates: &[f64], step: f64) -> f64 {
    counts
        .iter()
        .zip(rates)
        .map(|(&q, &lam)| {
            let mu = (lam * step).max(1e-300);
            mu - q as f64 * mu.ln()
        })
        .sum::<f64>()
        / counts.len().max(1) as f64
}

/// One point of a β grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScore {
    pub beta1: f64,
    pub beta2: f64,
    pub heldout_nll: f64,
}

/// Picks (β₁, β₂) by held-out likelihood: fit on the leading `1 − holdout` fraction of the
/// series, extrapolate over the rest, and score the held-out counts.
pub fn select_betas(
    series: &QpsSeries,
    base: &TrainConfig,
    beta1_grid: &[f64],
    beta2_grid: &[f64],
    period: Option<&PeriodInfo>,
    holdout: f64,
) -> Result<(TrainConfig, Vec<BetaScore>)> {
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::invalid("holdout fraction must lie in (0, 1)"));
    }
    if beta1_grid.is_empty() || beta2_grid.is_empty() {
        return Err(Error::invalid("beta grids must be non-empty"));
    }
    let n = series.len();
    let split = ((1.0 - holdout) * n as f64).round() as usize;
    let l = period.and_then(PeriodInfo::period);
    if split < 3 || split >= n || l.is_some_and(|l| l >= split) {
        return Err(Error::invalid("series too short for the requested holdout"));
    }
    let train_part = series.slice(0, split)?;
    let test_counts = &series.counts()[split..];
    let mut scores = Vec::new();
    for &b1 in beta1_grid {
        for &b2 in beta2_grid {
            let cfg = TrainConfig {
                beta1: b1,
                beta2: b2,
                ..base.clone()
            };
            let fit = train(&train_part, &cfg, period)?;
            let rates: Vec<f64> = (split..n).map(|b| fit.model.rate_of_bin(b)).collect();
            scores.push(BetaScore {
                beta1: b1,
                beta2: b2,
                heldout_nll: poisson_nll(test_counts, &rates, series.step()),
            });
        }
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.heldout_nll.total_cmp(&b.heldout_nll))
        .expect("non-empty grid");
    let chosen = TrainConfig {
        beta1: best.beta1,
        beta2: best.beta2,
        ..base.clone()
    };
    Ok((chosen, scores))
}
