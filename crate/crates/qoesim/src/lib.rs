//! Discrete-event simulator for text-streaming serving systems.
//!
//! Streaming LLM responses are consumed by people reading (or listening)
//! at a few tokens per second, while serving systems chase throughput and
//! time-to-first-token. This crate simulates the gap between the two: it
//! models a token-granularity serving engine (batched decode, KV memory,
//! preemption by swap or recompute), scores every request with a
//! quality-of-experience metric defined from the reader's side, and lets
//! batch-composition policies compete on identical workloads.
//!
//! The crate is organized bottom-up:
//!
//! - [`qoe`]: the per-request metric - ideal delivery timelines, actual
//!   consumption smoothing, and partial (mid-stream) evaluation.
//! - [`latency`]: a calibrated cost model - decode iteration latency vs
//!   batch size, prefill and swap costs, preemption mechanisms.
//! - [`pacer`]: client-side token release - buffered tokens are metered
//!   out at the reader's pace rather than dumped on arrival.
//! - [`scheduler`]: the QoE-aware batch composer (gain estimation,
//!   knapsack packing, overhead-aware refinement) plus FCFS and
//!   gain-sorted baselines.
//! - [`sim`]: the discrete-event engine tying it together - batched
//!   decode, KV accounting, preemption stalls - and its report formats.
//! - [`workload`]: trace files and seeded generators (Poisson, cyclic
//!   bursts) with length presets measured from public corpora.
//!
//! Everything is deterministic: same inputs, same outputs, byte for byte.

pub mod analysis;
pub mod config;
pub mod latency;
pub mod pacer;
pub mod qoe;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use analysis::{cdf, cdf_csv, comparison_table, read_numeric_column, AnalysisError};
pub use config::{
    run_experiment, ArrivalConfig, ConfigError, EngineConfig, ExperimentConfig, PolicyConfig,
    ProfileConfig, WorkloadConfig,
};
pub use latency::{DecodePoint, LatencyProfile, PreemptMechanism, ProfileError};
pub use pacer::{DeliveryChunker, PacerError, TokenPacer};
pub use qoe::{
    evaluate_partial, qoe, QoeError, QoeParams, QoeScore, TokenTimeline,
};
pub use scheduler::{
    batch_bounds, estimate_gain, refine, should_trigger, solve, GainEstimate, Objective,
    RequestId, RequestSnapshot, ScheduleDecision, SnapshotState, SolverBounds, SolverConfig,
    SolverKind,
};
pub use sim::report::{RequestRow, RequestStatus, SeriesPoint, SimReport, Summary};
pub use sim::{run_simulation, PolicyKind, RequestSpec, SimConfig, SimError};
pub use workload::{
    default_ttft_target, load_trace, resolve_trace, save_trace, BurstSpec, LenDist,
    ResolveConfig, SpeedBuckets, TraceGenerator, TraceRecord, WorkloadError, WorkloadPreset,
};
