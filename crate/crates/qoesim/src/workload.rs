//! Workload traces: loading, generation, and resolution into runnable
//! request specs.
//!
//! A trace is a CSV of arrival instants and token counts, optionally
//! carrying per-request TTFT targets and reader speeds. Loading keeps
//! those columns as they are; [`resolve_trace`] fills the gaps - a TTFT
//! target derived from the prompt length and a reader speed drawn from a
//! bucket distribution - turning records into [`RequestSpec`]s. Generators
//! write fully populated records so a saved trace replays bit-for-bit
//! regardless of who resolves it.

use crate::qoe::QoeParams;
use crate::sim::RequestSpec;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Prompt tokens a deployment is assumed to prefill per second when
/// deriving TTFT targets from prompt lengths.
pub const DEFAULT_PREFILL_REFERENCE_TPS: f64 = 5000.0;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("failed to read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Csv {
        line: u64,
        #[source]
        source: csv::Error,
    },
    #[error("trace line {line}: {reason}")]
    InvalidRecord { line: u64, reason: String },
    #[error("speed buckets must be nonempty with positive speeds and weights")]
    BadSpeedBuckets,
    #[error("length distribution needs mean > 0, std_dev >= 0, max >= 1")]
    BadLenDist,
    #[error(
        "burst spec infeasible: intensity {intensity} x duration_frac {duration_frac} \
         exceeds 1, leaving the off-phase a negative rate"
    )]
    InfeasibleBurst { intensity: f64, duration_frac: f64 },
    #[error("burst spec needs mean_rate > 0, intensity >= 1, 0 < duration_frac < 1, cycle > 0")]
    BadBurstSpec,
    #[error("arrival rate must be positive and finite")]
    BadRate,
    #[error("request parameters invalid: {0}")]
    BadParams(#[from] crate::qoe::QoeError),
}

/// One row of a workload trace. Optional columns are left empty by hand-
/// written traces and filled during resolution; generated traces populate
/// them so replays are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub arrival_s: f64,
    pub input_len: u64,
    pub output_len: u64,
    pub ttft_target_s: Option<f64>,
    pub consumption_speed_tps: Option<f64>,
}

/// Reads a trace CSV, validates each row, and returns records sorted by
/// arrival (stable: simultaneous arrivals keep file order). Errors carry
/// the 1-based line number of the offending row.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, WorkloadError> {
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                WorkloadError::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => WorkloadError::Csv { line: 1, source: e },
    })?;
    let headers = reader
        .headers()
        .map_err(|e| WorkloadError::Csv { line: 1, source: e })?
        .clone();
    let mut records = Vec::new();
    for result in reader.records() {
        let raw = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            WorkloadError::Csv { line, source: e }
        })?;
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        let record: TraceRecord = raw
            .deserialize(Some(&headers))
            .map_err(|e| WorkloadError::Csv { line, source: e })?;
        validate_record(&record, line)?;
        records.push(record);
    }
    records.sort_by(|a, b| a.arrival_s.total_cmp(&b.arrival_s));
    Ok(records)
}

fn validate_record(r: &TraceRecord, line: u64) -> Result<(), WorkloadError> {
    let bad = |reason: String| WorkloadError::InvalidRecord { line, reason };
    if !r.arrival_s.is_finite() || r.arrival_s < 0.0 {
        return Err(bad(format!("arrival_s must be finite and >= 0, got {}", r.arrival_s)));
    }
    if r.input_len == 0 {
        return Err(bad("input_len must be >= 1".into()));
    }
    if r.output_len == 0 {
        return Err(bad("output_len must be >= 1".into()));
    }
    if let Some(t) = r.ttft_target_s {
        if !t.is_finite() || t <= 0.0 {
            return Err(bad(format!("ttft_target_s must be positive, got {t}")));
        }
    }
    if let Some(s) = r.consumption_speed_tps {
        if !s.is_finite() || s <= 0.0 {
            return Err(bad(format!("consumption_speed_tps must be positive, got {s}")));
        }
    }
    Ok(())
}

/// Writes records as CSV with the canonical column order.
pub fn save_trace(
    path: impl AsRef<Path>,
    records: &[TraceRecord],
) -> Result<(), WorkloadError> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => WorkloadError::Io(io),
        other => WorkloadError::Csv {
            line: 0,
            source: csv::Error::from(std::io::Error::other(format!("{other:?}"))),
        },
    })?;
    for record in records {
        writer
            .serialize(record)
            .map_err(|e| WorkloadError::Csv { line: 0, source: e })?;
    }
    writer
        .flush()
        .map_err(WorkloadError::Io)?;
    Ok(())
}

/// Default TTFT target for a prompt: proportional to prefill work, never
/// below one second. A 5000-token prompt at the reference throughput gets
/// exactly the 1-second floor; anything longer scales linearly.
pub fn default_ttft_target(input_len: u64, prefill_reference_tps: f64) -> f64 {
    (input_len as f64 / prefill_reference_tps).max(1.0)
}

/// Discrete reader-speed distribution: `(tokens_per_second, weight)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedBuckets {
    buckets: Vec<(f64, f64)>,
}

impl SpeedBuckets {
    pub fn new(buckets: Vec<(f64, f64)>) -> Result<Self, WorkloadError> {
        if buckets.is_empty()
            || buckets
                .iter()
                .any(|(s, w)| !s.is_finite() || *s <= 0.0 || !w.is_finite() || *w <= 0.0)
        {
            return Err(WorkloadError::BadSpeedBuckets);
        }
        Ok(Self { buckets })
    }

    pub fn buckets(&self) -> &[(f64, f64)] {
        &self.buckets
    }

    /// Parses `"speed:weight,speed:weight,..."`, e.g. `"3.3:0.5,4.8:0.5"`.
    pub fn parse(text: &str) -> Result<Self, WorkloadError> {
        let mut buckets = Vec::new();
        for part in text.split(',') {
            let (speed, weight) = part
                .split_once(':')
                .ok_or(WorkloadError::BadSpeedBuckets)?;
            let speed: f64 = speed.trim().parse().map_err(|_| WorkloadError::BadSpeedBuckets)?;
            let weight: f64 = weight.trim().parse().map_err(|_| WorkloadError::BadSpeedBuckets)?;
            buckets.push((speed, weight));
        }
        Self::new(buckets)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let weights = self.buckets.iter().map(|(_, w)| *w);
        let index = WeightedIndex::new(weights)
            .expect("buckets validated at construction")
            .sample(rng);
        self.buckets[index].0
    }
}

impl Default for SpeedBuckets {
    /// Half slow readers (3.3 tok/s), half fast (4.8 tok/s).
    fn default() -> Self {
        Self {
            buckets: vec![(3.3, 0.5), (4.8, 0.5)],
        }
    }
}

/// Lognormal token-length distribution parameterized by the desired
/// arithmetic mean and standard deviation, truncated to `[1, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LenDist {
    pub mean: f64,
    pub std_dev: f64,
    pub max: u64,
}

impl LenDist {
    pub fn new(mean: f64, std_dev: f64, max: u64) -> Result<Self, WorkloadError> {
        if !(mean > 0.0) || !(std_dev >= 0.0) || max < 1 || !mean.is_finite() || !std_dev.is_finite()
        {
            return Err(WorkloadError::BadLenDist);
        }
        Ok(Self { mean, std_dev, max })
    }

    /// Moment-matched lognormal parameters: `sigma^2 = ln(1 + (s/m)^2)`,
    /// `mu = ln m - sigma^2 / 2`.
    fn mu_sigma(&self) -> (f64, f64) {
        let ratio = self.std_dev / self.mean;
        let sigma2 = (1.0 + ratio * ratio).ln();
        let mu = self.mean.ln() - sigma2 / 2.0;
        (mu, sigma2.sqrt())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let (mu, sigma) = self.mu_sigma();
        let value = LogNormal::new(mu, sigma)
            .expect("parameters validated at construction")
            .sample(rng);
        (value.round() as u64).clamp(1, self.max)
    }
}

/// Length presets measured from public conversation and document corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadPreset {
    /// Chat: short-to-medium prompts, few-hundred-token answers.
    Sharegpt,
    /// Document summarization: very long prompts, short answers.
    Arxiv,
    /// Code generation: short prompts, very long answers.
    Coding,
}

impl WorkloadPreset {
    pub fn input_dist(self) -> LenDist {
        let (mean, std_dev, max) = match self {
            WorkloadPreset::Sharegpt => (3171.0, 7943.0, 16_384),
            WorkloadPreset::Arxiv => (17_855.0, 11_401.0, 65_536),
            WorkloadPreset::Coding => (675.0, 1552.0, 16_384),
        };
        LenDist::new(mean, std_dev, max).expect("preset parameters are valid")
    }

    pub fn output_dist(self) -> LenDist {
        let (mean, std_dev, max) = match self {
            WorkloadPreset::Sharegpt => (385.0, 300.0, 2048),
            WorkloadPreset::Arxiv => (605.0, 153.0, 2048),
            WorkloadPreset::Coding => (5423.0, 21_293.0, 32_768),
        };
        LenDist::new(mean, std_dev, max).expect("preset parameters are valid")
    }
}

/// Cyclic arrival pattern: each cycle starts with a burst phase at
/// `intensity x mean_rate`, then an off phase whose rate is chosen so the
/// whole cycle averages exactly `mean_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    pub mean_rate_rps: f64,
    /// Burst rate multiplier, at least 1.
    pub intensity: f64,
    /// Fraction of each cycle spent bursting, strictly between 0 and 1.
    pub duration_frac: f64,
    pub cycle_len_s: f64,
}

impl BurstSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.mean_rate_rps > 0.0)
            || !(self.intensity >= 1.0)
            || !(self.duration_frac > 0.0 && self.duration_frac < 1.0)
            || !(self.cycle_len_s > 0.0)
            || !self.mean_rate_rps.is_finite()
            || !self.intensity.is_finite()
            || !self.cycle_len_s.is_finite()
        {
            return Err(WorkloadError::BadBurstSpec);
        }
        if self.intensity * self.duration_frac > 1.0 {
            return Err(WorkloadError::InfeasibleBurst {
                intensity: self.intensity,
                duration_frac: self.duration_frac,
            });
        }
        Ok(())
    }

    pub fn burst_rate(&self) -> f64 {
        self.intensity * self.mean_rate_rps
    }

    /// Off-phase rate balancing the cycle average; zero exactly when the
    /// burst phase carries the entire mean (`intensity x frac == 1`).
    pub fn off_rate(&self) -> f64 {
        self.mean_rate_rps * (1.0 - self.intensity * self.duration_frac)
            / (1.0 - self.duration_frac)
    }
}

/// Deterministic trace generator: lengths, reader speeds, and TTFT targets
/// are all drawn from one seeded stream, and every generated record is
/// fully populated.
#[derive(Debug, Clone)]
pub struct TraceGenerator {
    pub input: LenDist,
    pub output: LenDist,
    pub speeds: SpeedBuckets,
    pub prefill_reference_tps: f64,
    pub seed: u64,
}

impl TraceGenerator {
    pub fn from_preset(preset: WorkloadPreset, seed: u64) -> Self {
        Self {
            input: preset.input_dist(),
            output: preset.output_dist(),
            speeds: SpeedBuckets::default(),
            prefill_reference_tps: DEFAULT_PREFILL_REFERENCE_TPS,
            seed,
        }
    }

    fn record_at(&self, arrival_s: f64, rng: &mut ChaCha8Rng) -> TraceRecord {
        let input_len = self.input.sample(rng);
        let output_len = self.output.sample(rng);
        let speed = self.speeds.sample(rng);
        TraceRecord {
            arrival_s,
            input_len,
            output_len,
            ttft_target_s: Some(default_ttft_target(input_len, self.prefill_reference_tps)),
            consumption_speed_tps: Some(speed),
        }
    }

    /// Poisson arrivals at `rate_rps` over `[0, duration_s)`.
    pub fn poisson(
        &self,
        rate_rps: f64,
        duration_s: f64,
    ) -> Result<Vec<TraceRecord>, WorkloadError> {
        if !(rate_rps > 0.0) || !rate_rps.is_finite() || !(duration_s > 0.0) {
            return Err(WorkloadError::BadRate);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let exp = Exp::new(rate_rps).expect("rate checked positive");
        let mut records = Vec::new();
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= duration_s {
                break;
            }
            records.push(self.record_at(t, &mut rng));
        }
        Ok(records)
    }

    /// Cyclic burst arrivals over `[0, duration_s)`: each cycle opens with
    /// the burst phase, then the off phase. Phases draw exponential
    /// inter-arrivals at their own rate; memorylessness lets each phase
    /// restart the draw at its boundary.
    pub fn cyclic_burst(
        &self,
        spec: &BurstSpec,
        duration_s: f64,
    ) -> Result<Vec<TraceRecord>, WorkloadError> {
        spec.validate()?;
        if !(duration_s > 0.0) {
            return Err(WorkloadError::BadRate);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let burst_len = spec.duration_frac * spec.cycle_len_s;
        let mut records = Vec::new();
        let mut phase_start = 0.0;
        let mut bursting = true;
        while phase_start < duration_s {
            let (rate, phase_len) = if bursting {
                (spec.burst_rate(), burst_len)
            } else {
                (spec.off_rate(), spec.cycle_len_s - burst_len)
            };
            let phase_end = (phase_start + phase_len).min(duration_s);
            if rate > 0.0 {
                let exp = Exp::new(rate).expect("positive rate");
                let mut t = phase_start;
                loop {
                    t += exp.sample(&mut rng);
                    if t >= phase_end {
                        break;
                    }
                    records.push(self.record_at(t, &mut rng));
                }
            }
            phase_start += phase_len;
            bursting = !bursting;
        }
        Ok(records)
    }
}

/// Everything needed to turn raw records into runnable specs.
#[derive(Debug, Clone)]
pub struct ResolveConfig {
    pub speeds: SpeedBuckets,
    pub prefill_reference_tps: f64,
    /// Seed for drawing the missing reader speeds.
    pub seed: u64,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        Self {
            speeds: SpeedBuckets::default(),
            prefill_reference_tps: DEFAULT_PREFILL_REFERENCE_TPS,
            seed: 0,
        }
    }
}

/// Fills each record's missing TTFT target and reader speed and assigns
/// sequential ids in arrival order. Populated columns pass through
/// untouched, so generated traces resolve identically under any seed.
pub fn resolve_trace(
    records: &[TraceRecord],
    cfg: &ResolveConfig,
) -> Result<Vec<RequestSpec>, WorkloadError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut specs = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        let ttft = record
            .ttft_target_s
            .unwrap_or_else(|| default_ttft_target(record.input_len, cfg.prefill_reference_tps));
        let speed = record
            .consumption_speed_tps
            .unwrap_or_else(|| cfg.speeds.sample(&mut rng));
        specs.push(RequestSpec {
            id: index as u64,
            arrival: record.arrival_s,
            input_len: record.input_len,
            output_len: record.output_len,
            params: QoeParams::new(ttft, speed)?,
        });
    }
    Ok(specs)
}
