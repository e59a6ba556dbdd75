//! Experiment configuration: one TOML document describing the workload,
//! the serving cost profile, the scheduling policy, and engine knobs.
//!
//! Every section and field has a default, so an empty document is a valid
//! experiment (ShareGPT-like lengths, gentle Poisson arrivals, synthetic
//! cost profile, QoE-aware policy). A CLI or test overrides just what it
//! needs.

use crate::latency::{DecodePoint, LatencyProfile, ProfileError};
use crate::scheduler::{
    Objective, SolverConfig, SolverKind, DEFAULT_DP_BUDGET, DEFAULT_HORIZON, DEFAULT_WATERMARK,
};
use crate::sim::report::SimReport;
use crate::sim::{run_simulation, PolicyKind, RequestSpec, SimConfig, SimError};
use crate::workload::{
    load_trace, resolve_trace, LenDist, ResolveConfig, SpeedBuckets, TraceGenerator,
    WorkloadError, WorkloadPreset, DEFAULT_PREFILL_REFERENCE_TPS,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub workload: WorkloadConfig,
    pub profile: ProfileConfig,
    pub policy: PolicyConfig,
    pub engine: EngineConfig,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(toml::from_str(&text)?)
    }
}

/// Arrival process shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArrivalConfig {
    Poisson {
        rate_rps: f64,
        duration_s: f64,
    },
    Burst {
        mean_rate_rps: f64,
        intensity: f64,
        duration_frac: f64,
        cycle_len_s: f64,
        duration_s: f64,
    },
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        ArrivalConfig::Poisson {
            rate_rps: 0.5,
            duration_s: 600.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    /// Replay this trace CSV instead of generating arrivals.
    pub trace: Option<PathBuf>,
    pub preset: WorkloadPreset,
    /// Overrides the preset's prompt-length distribution.
    pub input_dist: Option<LenDist>,
    /// Overrides the preset's response-length distribution.
    pub output_dist: Option<LenDist>,
    pub arrival: ArrivalConfig,
    /// `"speed:weight,speed:weight"`; empty means the default buckets.
    pub speed_buckets: Option<String>,
    pub prefill_reference_tps: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            trace: None,
            preset: WorkloadPreset::Sharegpt,
            input_dist: None,
            output_dist: None,
            arrival: ArrivalConfig::default(),
            speed_buckets: None,
            prefill_reference_tps: DEFAULT_PREFILL_REFERENCE_TPS,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    fn speeds(&self) -> Result<SpeedBuckets, WorkloadError> {
        match &self.speed_buckets {
            Some(text) => SpeedBuckets::parse(text),
            None => Ok(SpeedBuckets::default()),
        }
    }

    pub fn generator(&self) -> Result<TraceGenerator, WorkloadError> {
        Ok(TraceGenerator {
            input: self.input_dist.unwrap_or_else(|| self.preset.input_dist()),
            output: self
                .output_dist
                .unwrap_or_else(|| self.preset.output_dist()),
            speeds: self.speeds()?,
            prefill_reference_tps: self.prefill_reference_tps,
            seed: self.seed,
        })
    }

    /// Produces raw trace records: loaded from the trace file when one is
    /// configured, generated otherwise.
    pub fn build_records(&self) -> Result<Vec<crate::workload::TraceRecord>, WorkloadError> {
        match &self.trace {
            Some(path) => load_trace(path),
            None => {
                let generator = self.generator()?;
                match self.arrival {
                    ArrivalConfig::Poisson {
                        rate_rps,
                        duration_s,
                    } => generator.poisson(rate_rps, duration_s),
                    ArrivalConfig::Burst {
                        mean_rate_rps,
                        intensity,
                        duration_frac,
                        cycle_len_s,
                        duration_s,
                    } => generator.cyclic_burst(
                        &crate::workload::BurstSpec {
                            mean_rate_rps,
                            intensity,
                            duration_frac,
                            cycle_len_s,
                        },
                        duration_s,
                    ),
                }
            }
        }
    }

    /// Produces the request list: replayed from the trace file when one
    /// is configured, generated otherwise. Same config, same requests.
    pub fn build_requests(&self) -> Result<Vec<RequestSpec>, WorkloadError> {
        let records = self.build_records()?;
        resolve_trace(
            &records,
            &ResolveConfig {
                speeds: self.speeds()?,
                prefill_reference_tps: self.prefill_reference_tps,
                seed: self.seed,
            },
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    /// `(batch_size, iteration_latency_s)` knots, ascending batch size.
    pub decode_points: Vec<(u32, f64)>,
    pub prefill_throughput: f64,
    pub swap_bandwidth: f64,
    pub kv_capacity: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let synthetic = LatencyProfile::synthetic_default();
        Self {
            decode_points: synthetic
                .decode_points
                .iter()
                .map(|p| (p.batch_size, p.iteration_latency))
                .collect(),
            prefill_throughput: synthetic.prefill_throughput,
            swap_bandwidth: synthetic.swap_bandwidth,
            kv_capacity: synthetic.kv_capacity,
        }
    }
}

impl ProfileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(toml::from_str(&text)?)
    }

    pub fn build(&self) -> Result<LatencyProfile, ProfileError> {
        LatencyProfile::new(
            self.decode_points
                .iter()
                .map(|&(batch_size, iteration_latency)| DecodePoint {
                    batch_size,
                    iteration_latency,
                })
                .collect(),
            self.prefill_throughput,
            self.swap_bandwidth,
            self.kv_capacity,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    pub solver: SolverKind,
    pub objective: Objective,
    /// Gain-estimation horizon in seconds.
    pub delta_t: f64,
    /// Memory occupancy fraction that triggers a fresh solve.
    pub watermark: f64,
    pub refiner: bool,
    pub dp_budget: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Andes,
            solver: SolverKind::Greedy,
            objective: Objective::Average,
            delta_t: DEFAULT_HORIZON,
            watermark: DEFAULT_WATERMARK,
            refiner: true,
            dp_budget: DEFAULT_DP_BUDGET,
        }
    }
}

impl PolicyConfig {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            solver: self.solver,
            objective: self.objective,
            horizon: self.delta_t,
            watermark: self.watermark,
            greedy_skip_unfit: false,
            dp_budget: self.dp_budget,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub network_delay: f64,
    pub chunk_size: usize,
    pub sample_interval: f64,
    pub idle_poll: f64,
    /// Stop the clock here; unfinished requests score partially.
    pub until: Option<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            network_delay: d.network_delay,
            chunk_size: d.chunk_size,
            sample_interval: d.sample_interval,
            idle_poll: d.idle_poll,
            until: d.until,
        }
    }
}

impl ExperimentConfig {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            policy: self.policy.policy,
            solver: self.policy.solver_config(),
            refiner_enabled: self.policy.refiner,
            network_delay: self.engine.network_delay,
            chunk_size: self.engine.chunk_size,
            sample_interval: self.engine.sample_interval,
            idle_poll: self.engine.idle_poll,
            until: self.engine.until,
        }
    }
}

/// Builds the workload and profile from `cfg` and runs the simulation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport, ConfigError> {
    let requests = cfg.workload.build_requests()?;
    let profile = cfg.profile.build()?;
    Ok(run_simulation(&requests, &profile, &cfg.sim_config())?)
}
