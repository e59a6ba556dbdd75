//! Command-line front end: run experiments, compare policies, extract
//! distribution curves, generate traces, and calibrate sustainable load.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags,
//! unreadable config or trace), 3 for runtime failures (solver budget,
//! output write failures).

use clap::{Args, Parser, Subcommand};
use qoesim::config::{run_experiment, ArrivalConfig, ConfigError, ExperimentConfig, ProfileConfig};
use qoesim::scheduler::{Objective, SolverKind};
use qoesim::sim::report::SimReport;
use qoesim::sim::PolicyKind;
use qoesim::workload::{save_trace, LenDist, SpeedBuckets, WorkloadPreset};
use qoesim::{cdf_csv, comparison_table, read_numeric_column};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Default output directory when `--out` is absent.
const OUT_ENV: &str = "QOESIM_OUT";

#[derive(Parser)]
#[command(
    name = "qoesim",
    version,
    about = "Deterministic discrete-event simulator for QoE-aware LLM serving",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 runtime error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-request, time-series, and summary files.
    Run(RunArgs),
    /// Run the same workload under several policies and print a comparison table.
    Compare(CompareArgs),
    /// Compute an empirical CDF over one column of a per-request CSV.
    Cdf(CdfArgs),
    /// Generate a workload trace CSV without running it.
    GenTrace(GenTraceArgs),
    /// Binary-search the highest Poisson rate the profile sustains under FCFS.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct WorkloadFlags {
    /// Preset (sharegpt | arxiv | coding) or path to a trace CSV.
    #[arg(long)]
    workload: Option<String>,
    /// Seed for arrivals, lengths, and reader speeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Mean arrival rate in requests per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Length of the arrival window in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Switch to cyclic bursts: intensity:duration_frac:cycle_len_s.
    #[arg(long)]
    burst: Option<String>,
    /// Override both length distributions:
    /// in_mean,in_std,in_max,out_mean,out_std,out_max.
    #[arg(long = "len-dist")]
    len_dist: Option<String>,
    /// Reader-speed buckets: speed:weight,speed:weight,...
    #[arg(long = "speed-buckets")]
    speed_buckets: Option<String>,
}

#[derive(Args)]
struct PolicyFlags {
    /// Batch-composition policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    /// Knapsack solver for the QoE-aware policy.
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    /// Scheduling objective for the QoE-aware policy.
    #[arg(long, value_enum)]
    objective: Option<Objective>,
    /// Gain-estimation horizon in seconds.
    #[arg(long = "delta-t")]
    delta_t: Option<f64>,
    /// Memory occupancy fraction that triggers a fresh solve.
    #[arg(long)]
    watermark: Option<f64>,
    /// Disable the overhead-aware refinement pass.
    #[arg(long = "no-refiner")]
    no_refiner: bool,
    /// Cell budget for the exact solver before it reports exhaustion.
    #[arg(long = "dp-budget")]
    dp_budget: Option<u64>,
}

#[derive(Args)]
struct EngineFlags {
    /// Latency profile TOML; omit for the synthetic default.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Tokens per client-side delivery push.
    #[arg(long)]
    chunk: Option<usize>,
    /// Seconds from token generation to client delivery.
    #[arg(long = "network-delay")]
    network_delay: Option<f64>,
    /// Stop the simulation clock at this instant instead of draining.
    #[arg(long)]
    until: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    workload: WorkloadFlags,
    #[command(flatten)]
    policy: PolicyFlags,
    #[command(flatten)]
    engine: EngineFlags,
    /// Output directory (or set QOESIM_OUT); omit both to skip files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated policies to race on the identical workload.
    #[arg(long, default_value = "andes,fcfs,lqsf")]
    policies: String,
    #[command(flatten)]
    workload: WorkloadFlags,
    #[command(flatten)]
    policy: PolicyFlags,
    #[command(flatten)]
    engine: EngineFlags,
    /// Write each policy's full report under <out>/<policy>/.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CdfArgs {
    /// Per-request CSV produced by `run` (or any headed CSV).
    #[arg(long)]
    input: PathBuf,
    /// Column to build the CDF over.
    #[arg(long, default_value = "qoe")]
    column: String,
    /// Output CSV path; omit to print to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    workload: WorkloadFlags,
    /// Where to write the trace CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    workload: WorkloadFlags,
    #[command(flatten)]
    engine: EngineFlags,
    /// Upper edge of the searched rate range, requests per second.
    #[arg(long = "max-rate", default_value_t = 4.0)]
    max_rate: f64,
    /// Bisection steps after the initial edge probes.
    #[arg(long, default_value_t = 12)]
    iterations: u32,
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Sim(_) => CliError::runtime(e.to_string()),
            _ => CliError::config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Cdf(args) => cmd_cdf(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn base_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_len_dist(text: &str) -> Result<(LenDist, LenDist), CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(CliError::config(format!(
            "--len-dist needs 6 comma-separated values \
             (in_mean,in_std,in_max,out_mean,out_std,out_max), got {}",
            parts.len()
        )));
    }
    let num = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::config(format!("--len-dist: {s:?} is not a number")))
    };
    let input = LenDist::new(num(parts[0])?, num(parts[1])?, num(parts[2])? as u64)
        .map_err(|e| CliError::config(format!("--len-dist input: {e}")))?;
    let output = LenDist::new(num(parts[3])?, num(parts[4])?, num(parts[5])? as u64)
        .map_err(|e| CliError::config(format!("--len-dist output: {e}")))?;
    Ok((input, output))
}

fn parse_burst(text: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::config(
            "--burst needs intensity:duration_frac:cycle_len_s".to_string(),
        ));
    }
    let num = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::config(format!("--burst: {s:?} is not a number")))
    };
    Ok((num(parts[0])?, num(parts[1])?, num(parts[2])?))
}

fn apply_workload_flags(
    cfg: &mut ExperimentConfig,
    flags: &WorkloadFlags,
) -> Result<(), CliError> {
    if let Some(value) = &flags.workload {
        match value.as_str() {
            "sharegpt" => {
                cfg.workload.preset = WorkloadPreset::Sharegpt;
                cfg.workload.trace = None;
            }
            "arxiv" => {
                cfg.workload.preset = WorkloadPreset::Arxiv;
                cfg.workload.trace = None;
            }
            "coding" => {
                cfg.workload.preset = WorkloadPreset::Coding;
                cfg.workload.trace = None;
            }
            other => {
                if !Path::new(other).exists() {
                    return Err(CliError::config(format!(
                        "--workload {other:?} is neither a preset \
                         (sharegpt | arxiv | coding) nor an existing trace file"
                    )));
                }
                cfg.workload.trace = Some(PathBuf::from(other));
            }
        }
    }
    if let Some(seed) = flags.seed {
        cfg.workload.seed = seed;
    }
    if let Some(text) = &flags.len_dist {
        let (input, output) = parse_len_dist(text)?;
        cfg.workload.input_dist = Some(input);
        cfg.workload.output_dist = Some(output);
    }
    if let Some(text) = &flags.speed_buckets {
        SpeedBuckets::parse(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.workload.speed_buckets = Some(text.clone());
    }

    let (mut mean, mut duration) = match cfg.workload.arrival {
        ArrivalConfig::Poisson {
            rate_rps,
            duration_s,
        } => (rate_rps, duration_s),
        ArrivalConfig::Burst {
            mean_rate_rps,
            duration_s,
            ..
        } => (mean_rate_rps, duration_s),
    };
    if let Some(rate) = flags.rate {
        mean = rate;
    }
    if let Some(d) = flags.duration {
        duration = d;
    }
    if let Some(text) = &flags.burst {
        let (intensity, duration_frac, cycle_len_s) = parse_burst(text)?;
        cfg.workload.arrival = ArrivalConfig::Burst {
            mean_rate_rps: mean,
            intensity,
            duration_frac,
            cycle_len_s,
            duration_s: duration,
        };
    } else if flags.rate.is_some() || flags.duration.is_some() {
        cfg.workload.arrival = match cfg.workload.arrival {
            ArrivalConfig::Burst {
                intensity,
                duration_frac,
                cycle_len_s,
                ..
            } => ArrivalConfig::Burst {
                mean_rate_rps: mean,
                intensity,
                duration_frac,
                cycle_len_s,
                duration_s: duration,
            },
            ArrivalConfig::Poisson { .. } => ArrivalConfig::Poisson {
                rate_rps: mean,
                duration_s: duration,
            },
        };
    }
    Ok(())
}

fn apply_policy_flags(cfg: &mut ExperimentConfig, flags: &PolicyFlags) {
    if let Some(policy) = flags.policy {
        cfg.policy.policy = policy;
    }
    if let Some(solver) = flags.solver {
        cfg.policy.solver = solver;
    }
    if let Some(objective) = flags.objective {
        cfg.policy.objective = objective;
    }
    if let Some(delta_t) = flags.delta_t {
        cfg.policy.delta_t = delta_t;
    }
    if let Some(watermark) = flags.watermark {
        cfg.policy.watermark = watermark;
    }
    if flags.no_refiner {
        cfg.policy.refiner = false;
    }
    if let Some(budget) = flags.dp_budget {
        cfg.policy.dp_budget = budget;
    }
}

fn apply_engine_flags(cfg: &mut ExperimentConfig, flags: &EngineFlags) -> Result<(), CliError> {
    if let Some(path) = &flags.profile {
        cfg.profile = ProfileConfig::load(path)?;
    }
    if let Some(chunk) = flags.chunk {
        cfg.engine.chunk_size = chunk;
    }
    if let Some(delay) = flags.network_delay {
        cfg.engine.network_delay = delay;
    }
    if let Some(until) = flags.until {
        cfg.engine.until = Some(until);
    }
    Ok(())
}

fn resolve_out(flag: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
}

fn write_report(report: &SimReport, dir: &Path) -> Result<(), CliError> {
    report
        .write_to_dir(dir)
        .map_err(|e| CliError::runtime(format!("failed to write {}: {e}", dir.display())))?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config)?;
    apply_workload_flags(&mut cfg, &args.workload)?;
    apply_policy_flags(&mut cfg, &args.policy);
    apply_engine_flags(&mut cfg, &args.engine)?;
    let report = run_experiment(&cfg)?;
    print!("{}", report.summary_json());
    if let Some(dir) = resolve_out(&args.out) {
        write_report(&report, &dir)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config)?;
    apply_workload_flags(&mut cfg, &args.workload)?;
    apply_policy_flags(&mut cfg, &args.policy);
    apply_engine_flags(&mut cfg, &args.engine)?;
    let mut policies = Vec::new();
    for name in args.policies.split(',') {
        let policy = match name.trim() {
            "andes" => PolicyKind::Andes,
            "fcfs" => PolicyKind::Fcfs,
            "lqsf" => PolicyKind::Lqsf,
            other => {
                return Err(CliError::config(format!(
                    "--policies: unknown policy {other:?} (andes | fcfs | lqsf)"
                )))
            }
        };
        policies.push((name.trim().to_string(), policy));
    }
    let out = resolve_out(&args.out);
    let mut rows = Vec::new();
    for (label, policy) in policies {
        let mut variant = cfg.clone();
        variant.policy.policy = policy;
        let report = run_experiment(&variant)?;
        if let Some(dir) = &out {
            write_report(&report, &dir.join(&label))?;
        }
        rows.push((label, report.summary));
    }
    print!("{}", comparison_table(&rows));
    Ok(())
}

fn cmd_cdf(args: CdfArgs) -> Result<(), CliError> {
    let values = read_numeric_column(&args.input, &args.column)
        .map_err(|e| CliError::config(e.to_string()))?;
    let text = cdf_csv(&args.column, &values);
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("failed to write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config)?;
    apply_workload_flags(&mut cfg, &args.workload)?;
    let records = cfg
        .workload
        .build_records()
        .map_err(|e| CliError::config(e.to_string()))?;
    save_trace(&args.out, &records)
        .map_err(|e| CliError::runtime(format!("failed to write trace: {e}")))?;
    println!("{} requests -> {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config)?;
    apply_workload_flags(&mut cfg, &args.workload)?;
    apply_engine_flags(&mut cfg, &args.engine)?;
    if !(args.max_rate > 0.0) || !args.max_rate.is_finite() {
        return Err(CliError::config("--max-rate must be positive".to_string()));
    }
    let duration = match cfg.workload.arrival {
        ArrivalConfig::Poisson { duration_s, .. } => duration_s,
        ArrivalConfig::Burst { duration_s, .. } => duration_s,
    };
    cfg.policy.policy = PolicyKind::Fcfs;
    cfg.engine.until = Some(duration);

    // A rate is sustainable when the waiting queue at the end of the
    // arrival window is still negligible next to everything that arrived.
    let probe = |rate: f64| -> Result<bool, CliError> {
        let mut variant = cfg.clone();
        variant.workload.arrival = ArrivalConfig::Poisson {
            rate_rps: rate,
            duration_s: duration,
        };
        let report = run_experiment(&variant)?;
        let backlog = report.series.last().map(|p| p.queue_len).unwrap_or(0);
        let total = report.summary.total_requests;
        let threshold = (0.02 * total as f64).ceil().max(3.0) as usize;
        let bounded = backlog <= threshold;
        eprintln!(
            "probe rate={rate:.4} rps: {total} arrivals, backlog {backlog} \
             (threshold {threshold}) -> {}",
            if bounded { "bounded" } else { "unbounded" }
        );
        Ok(bounded)
    };

    if probe(args.max_rate)? {
        println!("max_sustainable_rate_rps={}", args.max_rate);
        eprintln!("bounded across the whole range; raise --max-rate to search further");
        return Ok(());
    }
    let mut lo = 0.0;
    let mut hi = args.max_rate;
    for _ in 0..args.iterations {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    println!("max_sustainable_rate_rps={lo:.4}");
    Ok(())
}
