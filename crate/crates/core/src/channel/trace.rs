//! Measurement-trace channels.
//!
//! A trace is a list of `(timestamp_s, sir_db)` samples. The rate for a slot
//! is the rate of the latest sample at or before the slot's time, held
//! constant until the next sample. An epoch shift reads the value of the
//! sample `shift_epochs` positions later (wrapping), which lets two devices
//! share one trace with a time offset.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::rates::{cqi_from_sir, RateTable};
use crate::error::{Error, Result};
use crate::SLOTS_PER_SECOND;

/// Traces whose mapped CQI has a smaller standard deviation show too little
/// fluctuation to offer any multi-user diversity and are rejected.
pub const MIN_CQI_STD: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub timestamp_s: f64,
    pub sir_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceChannel {
    samples: Vec<TraceSample>,
    offsets_ms: Vec<u64>,
    rates: Vec<u32>,
    shift_epochs: usize,
}

impl TraceChannel {
    pub fn new(samples: Vec<TraceSample>, shift_epochs: usize, table: &RateTable) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("trace", "trace has no samples"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.timestamp_s.is_finite() || !s.sir_db.is_finite() {
                return Err(Error::config("trace", format!("sample {i} is not finite")));
            }
            if i > 0 && s.timestamp_s <= samples[i - 1].timestamp_s {
                return Err(Error::config(
                    "trace",
                    format!("timestamps must strictly increase (sample {i})"),
                ));
            }
        }
        let t0 = samples[0].timestamp_s;
        let offsets_ms = samples
            .iter()
            .map(|s| ((s.timestamp_s - t0) * SLOTS_PER_SECOND as f64).round() as u64)
            .collect();
        let rates = samples
            .iter()
            .map(|s| table.rate(cqi_from_sir(s.sir_db)).expect("mapped CQI is in range"))
            .collect();
        Ok(Self {
            samples,
            offsets_ms,
            rates,
            shift_epochs,
        })
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn shift_epochs(&self) -> usize {
        self.shift_epochs
    }

    pub fn with_shift(&self, shift_epochs: usize) -> Self {
        Self {
            shift_epochs,
            ..self.clone()
        }
    }

    /// Index of the sample whose value applies at `slot`, after shifting.
    pub fn sample_index_at(&self, slot: u64) -> usize {
        let held = self.offsets_ms.partition_point(|&t| t <= slot).max(1) - 1;
        (held + self.shift_epochs) % self.samples.len()
    }

    pub fn rate_at(&self, slot: u64) -> u32 {
        self.rates[self.sample_index_at(slot)]
    }

    pub fn cqi_std(&self) -> f64 {
        let cqis: Vec<f64> = self
            .samples
            .iter()
            .map(|s| f64::from(cqi_from_sir(s.sir_db)))
            .collect();
        let n = cqis.len() as f64;
        let mean = cqis.iter().sum::<f64>() / n;
        (cqis.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    pub fn fluctuates_enough(&self) -> bool {
        self.cqi_std() >= MIN_CQI_STD
    }
}

/// Lookup of a trace's rate at a slot (free-function form of [`TraceChannel::rate_at`]).
pub fn trace_rate_at(trace: &TraceChannel, slot: u64) -> u32 {
    trace.rate_at(slot)
}

pub fn parse_trace(text: &str, origin: &str) -> Result<Vec<TraceSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |message: String| Error::TraceFormat {
            path: origin.to_string(),
            line: line_no,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let (ts, sir) = line
            .split_once(',')
            .ok_or_else(|| bad("expected `timestamp_s,sir_db`".into()))?;
        let timestamp_s: f64 = ts
            .trim()
            .parse()
            .map_err(|e| bad(format!("timestamp `{ts}`: {e}")))?;
        let sir_db: f64 = sir
            .trim()
            .parse()
            .map_err(|e| bad(format!("sir_db `{sir}`: {e}")))?;
        if let Some(prev) = out.last().map(|s: &TraceSample| s.timestamp_s) {
            if timestamp_s <= prev {
                return Err(bad(format!("timestamp {timestamp_s} does not increase")));
            }
        }
        out.push(TraceSample { timestamp_s, sir_db });
    }
    if out.is_empty() {
        return Err(Error::config(origin, "trace has no samples"));
    }
    Ok(out)
}

pub fn load_trace(path: &Path, shift_epochs: usize, table: &RateTable) -> Result<TraceChannel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples = parse_trace(&text, &path.display().to_string())?;
    TraceChannel::new(samples, shift_epochs, table)
}

pub fn format_trace(samples: &[TraceSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 16);
    for s in samples {
        writeln!(out, "{:.3},{:.2}", s.timestamp_s, s.sir_db).expect("write to String");
    }
    out
}

/// Parameters of the synthetic SIR process: a mean-reverting AR(1) walk
/// sampled once per epoch.
#[derive(Clone, Copy, Debug)]
pub struct TraceGenParams {
    pub epochs: usize,
    pub epoch_s: f64,
    pub mean_db: (f64, f64),
    pub std_db: f64,
    pub correlation: f64,
}

impl Default for TraceGenParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            epoch_s: 1.0,
            mean_db: (2.0, 14.0),
            std_db: 7.0,
            correlation: 0.85,
        }
    }
}

/// Draws one synthetic trace that passes the fluctuation filter.
pub fn generate_trace<R: Rng + ?Sized>(params: &TraceGenParams, rng: &mut R) -> Vec<TraceSample> {
    let table = RateTable::lte();
    loop {
        let mean = rng.random_range(params.mean_db.0..params.mean_db.1);
        let innovation = Normal::new(0.0, params.std_db * (1.0 - params.correlation.powi(2)).sqrt())
            .expect("finite std");
        let mut x = mean + Normal::new(0.0, params.std_db).expect("finite std").sample(rng);
        let mut samples = Vec::with_capacity(params.epochs);
        for k in 0..params.epochs {
            samples.push(TraceSample {
                timestamp_s: k as f64 * params.epoch_s,
                sir_db: (x * 100.0).round() / 100.0,
            });
            x = mean + params.correlation * (x - mean) + innovation.sample(rng);
        }
        let trace = TraceChannel::new(samples, 0, &table).expect("generated trace is well formed");
        if trace.fluctuates_enough() {
            return trace.samples;
        }
    }
}
