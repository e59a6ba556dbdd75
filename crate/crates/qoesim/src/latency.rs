//! Serving-cost model: iteration latency, prefill cost, preemption overhead.
//!
//! The engine never runs real kernels; everything is driven by a
//! [`LatencyProfile`] that maps batch size to decode iteration latency via
//! piecewise-linear interpolation over measured (or synthetic) knots, plus
//! scalar prefill throughput and swap bandwidth. Profiles can be loaded from
//! a TOML document so measured hardware curves drop in without recompiling.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile needs at least one decode latency point")]
    EmptyDecodePoints,
    #[error("decode points must have strictly increasing batch sizes (saw {prev} then {next})")]
    UnsortedDecodePoints { prev: u32, next: u32 },
    #[error("iteration latency must be positive and nondecreasing in batch size (batch {batch}: {latency})")]
    BadLatency { batch: u32, latency: f64 },
    #[error("decode point batch sizes start at 1 (saw {0})")]
    ZeroBatch(u32),
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("kv_capacity must be at least 1")]
    ZeroCapacity,
    #[error("failed to read profile file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse profile: {0}")]
    Parse(#[from] toml::de::Error),
}

/// How a running request's KV state is handled when it is preempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreemptMechanism {
    /// Copy KV state out to host memory now, copy it back on resume.
    Swap,
    /// Drop KV state now (free), rebuild it with a prefill pass on resume.
    Recompute,
}

/// One measured point of the decode latency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodePoint {
    pub batch_size: u32,
    /// Seconds for one decode iteration at this batch size.
    pub iteration_latency: f64,
}

/// Cost model for one serving configuration.
///
/// Invariants (enforced by [`LatencyProfile::new`] and the TOML loader):
/// decode points sorted by strictly increasing batch size with positive,
/// nondecreasing latencies; throughput, bandwidth, and capacity positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub decode_points: Vec<DecodePoint>,
    /// Prompt tokens processed per second during a prefill pass.
    pub prefill_throughput: f64,
    /// KV tokens moved per second in either direction when swapping.
    pub swap_bandwidth: f64,
    /// Total KV slots (tokens) the executor can hold.
    pub kv_capacity: u64,
}

impl LatencyProfile {
    pub fn new(
        decode_points: Vec<DecodePoint>,
        prefill_throughput: f64,
        swap_bandwidth: f64,
        kv_capacity: u64,
    ) -> Result<Self, ProfileError> {
        let profile = Self {
            decode_points,
            prefill_throughput,
            swap_bandwidth,
            kv_capacity,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Synthetic default: iteration latency `0.02 + 0.0008 * batch` seconds
    /// on batches 1..=512 (flat beyond), which puts per-request generation
    /// near 11 tokens/s at around batch 90 - a moderate-load operating
    /// point - while a lone request decodes at ~48 tokens/s.
    pub fn synthetic_default() -> Self {
        Self::new(
            vec![
                DecodePoint {
                    batch_size: 1,
                    iteration_latency: 0.0208,
                },
                DecodePoint {
                    batch_size: 512,
                    iteration_latency: 0.4296,
                },
            ],
            5000.0,
            20_000.0,
            60_000,
        )
        .expect("synthetic default profile is valid")
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.decode_points.is_empty() {
            return Err(ProfileError::EmptyDecodePoints);
        }
        let mut prev: Option<&DecodePoint> = None;
        for point in &self.decode_points {
            if point.batch_size == 0 {
                return Err(ProfileError::ZeroBatch(0));
            }
            if !(point.iteration_latency > 0.0 && point.iteration_latency.is_finite()) {
                return Err(ProfileError::BadLatency {
                    batch: point.batch_size,
                    latency: point.iteration_latency,
                });
            }
            if let Some(p) = prev {
                if point.batch_size <= p.batch_size {
                    return Err(ProfileError::UnsortedDecodePoints {
                        prev: p.batch_size,
                        next: point.batch_size,
                    });
                }
                if point.iteration_latency < p.iteration_latency {
                    return Err(ProfileError::BadLatency {
                        batch: point.batch_size,
                        latency: point.iteration_latency,
                    });
                }
            }
            prev = Some(point);
        }
        for (field, value) in [
            ("prefill_throughput", self.prefill_throughput),
            ("swap_bandwidth", self.swap_bandwidth),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ProfileError::NonPositive { field, value });
            }
        }
        if self.kv_capacity == 0 {
            return Err(ProfileError::ZeroCapacity);
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ProfileError> {
        let profile: Self = toml::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Seconds for one decode iteration at `batch` concurrent requests.
    ///
    /// Piecewise linear between knots; flat above the last knot; below the
    /// first knot, the line through the first two knots is extended (floored
    /// at a hair above zero so the result stays a valid duration).
    pub fn decode_latency(&self, batch: u32) -> f64 {
        let points = &self.decode_points;
        let batch = batch.max(1) as f64;
        if points.len() == 1 {
            return points[0].iteration_latency;
        }
        let last = points[points.len() - 1];
        if batch >= last.batch_size as f64 {
            return last.iteration_latency;
        }
        // Segment lookup; for batches below the first knot this selects the
        // first segment, extrapolating its line leftward.
        let mut hi = 1;
        while hi + 1 < points.len() && (points[hi].batch_size as f64) < batch {
            hi += 1;
        }
        let (a, b) = (points[hi - 1], points[hi]);
        let span = (b.batch_size - a.batch_size) as f64;
        let t = (batch - a.batch_size as f64) / span;
        let latency = a.iteration_latency + t * (b.iteration_latency - a.iteration_latency);
        latency.max(1e-9)
    }

    /// Seconds to run a prefill pass over `input_len` prompt tokens.
    pub fn prefill_latency(&self, input_len: u64) -> f64 {
        input_len as f64 / self.prefill_throughput
    }

    /// `(preempt_cost, resume_cost)` in seconds for evicting and later
    /// restoring a request holding `context_len` KV tokens.
    pub fn preemption_overhead(&self, context_len: u64, mechanism: PreemptMechanism) -> (f64, f64) {
        match mechanism {
            PreemptMechanism::Swap => {
                let transfer = context_len as f64 / self.swap_bandwidth;
                (transfer, transfer)
            }
            PreemptMechanism::Recompute => (0.0, self.prefill_latency(context_len)),
        }
    }

    /// Picks the mechanism with the smaller total (preempt + resume) cost;
    /// ties go to swap, which leaves the KV state intact.
    pub fn select_mechanism(&self, context_len: u64) -> PreemptMechanism {
        let (so, si) = self.preemption_overhead(context_len, PreemptMechanism::Swap);
        let (ro, ri) = self.preemption_overhead(context_len, PreemptMechanism::Recompute);
        if so + si <= ro + ri {
            PreemptMechanism::Swap
        } else {
            PreemptMechanism::Recompute
        }
    }

    /// Largest batch size in `1..=cap` whose iteration latency does not
    /// exceed `max_latency`; 1 if even a lone request is too slow.
    pub fn max_batch_within_latency(&self, max_latency: f64, cap: u32) -> u32 {
        let cap = cap.max(1);
        if self.decode_latency(1) > max_latency {
            return 1;
        }
        let (mut lo, mut hi) = (1u32, cap);
        while lo < hi {
            let mid = lo + (hi - lo + 1) / 2;
            if self.decode_latency(mid) <= max_latency {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }
}
