//! Query traces: CSV ingestion, fixed-step aggregation, service-time models and synthetic
//! NHPP generation.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::intensity::Intensity;
use crate::rng::{self, Domain};

/// One query: its arrival time and, optionally, a recorded processing time (both seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryEvent {
    pub arrival: f64,
    pub processing: Option<f64>,
}

impl QueryEvent {
    pub fn at(arrival: f64) -> Self {
        Self {
            arrival,
            processing: None,
        }
    }
}

/// Query counts per fixed time step. `counts[t]` covers `[epoch + t·step, epoch + (t+1)·step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpsSeries {
    counts: Vec<u64>,
    step: f64,
    epoch: f64,
}

impl QpsSeries {
    pub fn new(counts: Vec<u64>, step: f64, epoch: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        if counts.is_empty() {
            return Err(Error::invalid("series must have at least one bin"));
        }
        Ok(Self {
            counts,
            step,
            epoch,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn epoch(&self) -> f64 {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// End of the last bin.
    pub fn end(&self) -> f64 {
        self.epoch + self.counts.len() as f64 * self.step
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Sums consecutive groups of `factor` bins; a trailing partial group is dropped.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("aggregation factor must be at least 1"));
        }
        let counts: Vec<u64> = self
            .counts
            .chunks_exact(factor)
            .map(|c| c.iter().sum())
            .collect();
        Self::new(counts, self.step * factor as f64, self.epoch)
    }

    /// Bins `[from, to)` as a new series.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.counts.len() {
            return Err(Error::invalid(format!(
                "bad slice {from}..{to} of {} bins",
                self.counts.len()
            )));
        }
        Self::new(
            self.counts[from..to].to_vec(),
            self.step,
            self.epoch + from as f64 * self.step,
        )
    }
}

/// Distribution of processing times `s` or pending times `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceTimeModel {
    Fixed { mean: f64 },
    Exponential { mean: f64 },
    Empirical { samples: Vec<f64> },
}

impl ServiceTimeModel {
    pub fn fixed(mean: f64) -> Result<Self> {
        let m = Self::Fixed { mean };
        m.validate()?;
        Ok(m)
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        let m = Self::Exponential { mean };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        let m = Self::Empirical { samples };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed { mean } => {
                if !(*mean >= 0.0 && mean.is_finite()) {
                    return Err(Error::invalid(format!("fixed service time must be non-negative, got {mean}")));
                }
            }
            Self::Exponential { mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return Err(Error::invalid(format!("service time mean must be positive, got {mean}")));
                }
            }
            Self::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(Error::invalid("empirical service time model needs samples"));
                }
                if samples.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::invalid("empirical service times must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Fixed { mean } | Self::Exponential { mean } => *mean,
            Self::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    /// The constant value when the model is degenerate.
    pub fn deterministic(&self) -> Option<f64> {
        match self {
            Self::Fixed { mean } => Some(*mean),
            Self::Empirical { samples } if samples.iter().all(|s| *s == samples[0]) => Some(samples[0]),
            _ => None,
        }
    }

    /// Largest value the model can produce, if bounded.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            Self::Fixed { mean } => Some(*mean),
            Self::Exponential { .. } => None,
            Self::Empirical { samples } => samples.iter().copied().reduce(f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Fixed { mean } => *mean,
            Self::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                // Exp1 can return exactly 0; keep the strictly-positive invariant
                (e * mean).max(f64::MIN_POSITIVE)
            }
            Self::Empirical { samples } => samples[rng.random_range(0..samples.len())],
        }
    }

    /// Parses `fixed:13`, `exp:20`/`exponential:20` or `empirical:1.5,2,3`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("service time `{spec}` must look like kind:value")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{s}` in `{spec}`")))
        };
        match kind.trim() {
            "fixed" => Self::fixed(num(rest)?),
            "exp" | "exponential" => Self::exponential(num(rest)?),
            "empirical" => Self::empirical(rest.split(',').map(num).collect::<Result<_>>()?),
            other => Err(Error::Config(format!("unknown service time kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ServiceTimeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed { mean } => write!(f, "fixed:{mean}"),
            Self::Exponential { mean } => write!(f, "exp:{mean}"),
            Self::Empirical { samples } => {
                let parts: Vec<String> = samples.iter().map(|s| s.to_string()).collect();
                write!(f, "empirical:{}", parts.join(","))
            }
        }
    }
}

/// Column names used to read a trace CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSchema {
    pub arrival: String,
    pub processing: Option<String>,
}

impl Default for TraceSchema {
    fn default() -> Self {
        Self {
            arrival: "arrival_s".into(),
            processing: Some("processing_s".into()),
        }
    }
}

/// Reads a trace CSV (`arrival_s[,processing_s]`) and returns events sorted by arrival.
///
/// Every malformed row is collected and reported together, with 1-based row numbers where the
/// header is row 1.
pub fn ingest_trace(path: &Path, schema: &TraceSchema) -> Result<Vec<QueryEvent>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_trace(file, schema)
}

pub fn read_trace<R: Read>(input: R, schema: &TraceSchema) -> Result<Vec<QueryEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRows(vec![RowError { row: 1, message: e.to_string() }]))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let arrival_col = col(&schema.arrival).ok_or_else(|| {
        Error::MalformedRows(vec![RowError {
            row: 1,
            message: format!("missing column `{}`", schema.arrival),
        }])
    })?;
    let processing_col = schema.processing.as_deref().and_then(col);

    let mut events = Vec::new();
    let mut bad = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                bad.push(RowError { row, message: e.to_string() });
                continue;
            }
        };
        let field = |c: usize| record.get(c).unwrap_or("");
        let arrival = match field(arrival_col).parse::<f64>() {
            Ok(a) if a.is_finite() && a >= 0.0 => a,
            Ok(a) => {
                bad.push(RowError { row, message: format!("arrival {a} must be a non-negative finite number") });
                continue;
            }
            Err(_) => {
                bad.push(RowError { row, message: format!("unparseable arrival `{}`", field(arrival_col)) });
                continue;
            }
        };
        let processing = match processing_col.map(field) {
            None | Some("") => None,
            Some(raw) => match raw.parse::<f64>() {
                Ok(s) if s.is_finite() && s > 0.0 => Some(s),
                _ => {
                    bad.push(RowError { row, message: format!("processing time `{raw}` must be positive") });
                    continue;
                }
            },
        };
        events.push(QueryEvent { arrival, processing });
    }
    if !bad.is_empty() {
        return Err(Error::MalformedRows(bad));
    }
    if events.is_empty() {
        return Err(Error::EmptyTrace);
    }
    sort_events(&mut events);
    Ok(events)
}

/// Writes events in the trace CSV format. The processing column is emitted only when at least
/// one event carries a processing time.
pub fn write_trace<W: Write>(out: W, events: &[QueryEvent]) -> Result<()> {
    let with_processing = events.iter().any(|e| e.processing.is_some());
    let mut w = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    if with_processing {
        w.write_record(["arrival_s", "processing_s"]).map_err(ser)?;
    } else {
        w.write_record(["arrival_s"]).map_err(ser)?;
    }
    for e in events {
        let a = fmt_seconds(e.arrival);
        if with_processing {
            let p = e.processing.map(fmt_seconds).unwrap_or_default();
            w.write_record([a, p]).map_err(ser)?;
        } else {
            w.write_record([a]).map_err(ser)?;
        }
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn save_trace(path: &Path, events: &[QueryEvent]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_trace(std::io::BufWriter::new(file), events)
}

// shortest representation that round-trips
fn fmt_seconds(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn sort_events(events: &mut [QueryEvent]) {
    events.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
}

/// Counts events per `step`-second bin starting at time 0, up to the bin holding the last event.
pub fn aggregate_qps(events: &[QueryEvent], step: f64) -> Result<QpsSeries> {
    let last = events
        .iter()
        .map(|e| e.arrival)
        .reduce(f64::max)
        .ok_or(Error::EmptyTrace)?;
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let bins = (last / step).floor() as usize + 1;
    aggregate_qps_window(events, step, 0.0, bins)
}

/// Counts events per bin over the fixed window `[start, start + bins·step)`; events outside are
/// ignored.
pub fn aggregate_qps_window(events: &[QueryEvent], step: f64, start: f64, bins: usize) -> Result<QpsSeries> {
    if events.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    if bins == 0 {
        return Err(Error::invalid("window must contain at least one bin"));
    }
    let mut counts = vec![0u64; bins];
    for e in events {
        let rel = e.arrival - start;
        if rel < 0.0 {
            continue;
        }
        let k = (rel / step).floor() as usize;
        if k < bins {
            counts[k] += 1;
        }
    }
    QpsSeries::new(counts, step, start)
}

/// Samples an NHPP on `[start, start + horizon)` by time rescaling: unit-rate exponential gaps
/// are accumulated and mapped through the inverse cumulative intensity.
pub fn generate_nhpp_trace(intensity: &dyn Intensity, start: f64, horizon: f64, seed: u64) -> Result<Vec<QueryEvent>> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let end = start + horizon;
    let total = intensity.integrate(start, end);
    if !total.is_finite() {
        return Err(Error::NonFiniteIntensity(start));
    }
    let mut rng = rng::stream(seed, Domain::Trace, 0);
    let mut events = Vec::new();
    let mut mass = 0.0;
    let mut from = start;
    loop {
        let gap: f64 = Exp1.sample(&mut rng);
        mass += gap;
        if mass >= total {
            break;
        }
        // invert from the previous arrival to keep the cumulative sums small
        let t = intensity.inverse(from, gap)?;
        if t >= end {
            break;
        }
        events.push(QueryEvent::at(t));
        from = t;
    }
    Ok(events)
}

/// Fills missing processing times from `model`, using one RNG draw per event index.
pub fn attach_processing(events: &mut [QueryEvent], model: &ServiceTimeModel, seed: u64) {
    let mut rng = rng::stream(seed, Domain::Processing, u64::MAX);
    for e in events.iter_mut() {
        let s = model.sample(&mut rng);
        if e.processing.is_none() {
            e.processing = Some(s);
        }
    }
}

/// The daily-peak intensity `4^10 u^10 (1-u)^10 + 0.1`, `u = (t mod period) / period`.
pub fn daily_peak_intensity(t: f64, period: f64) -> f64 {
    let u = t.rem_euclid(period) / period;
    4f64.powi(10) * u.powi(10) * (1.0 - u).powi(10) + 0.1
}
