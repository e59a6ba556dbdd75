//! Generates a cyclic-burst request trace, saves it as CSV, reloads it,
//! and resolves it into runnable request specs.
//!
//! Traces carry arrivals and token lengths; reader behavior (TTFT target
//! and consumption speed) can be left blank per row and filled in at
//! resolve time - the TTFT target from the input length, the speed drawn
//! from a configurable bucket mix.
//!
//! Run with: `cargo run --example generate_workload`

use qoesim::{
    load_trace, resolve_trace, save_trace, BurstSpec, ResolveConfig, TraceGenerator,
    WorkloadPreset,
};

fn main() {
    let gen = TraceGenerator::from_preset(WorkloadPreset::Sharegpt, 42);

    // One request per second on average, bursting to 3x for 20% of each
    // 300-second cycle. The off-phase rate is scaled down so the mean
    // holds; a burst carrying more than the whole mean is rejected.
    let spec = BurstSpec {
        mean_rate_rps: 1.0,
        intensity: 3.0,
        duration_frac: 0.2,
        cycle_len_s: 300.0,
    };
    let records = gen.cyclic_burst(&spec, 1_800.0).unwrap();
    println!(
        "generated {} requests over 1800s (mean {:.3} rps)",
        records.len(),
        records.len() as f64 / 1_800.0
    );

    // Arrival density per cycle phase: the burst lives in the first 60s.
    let mut phase_counts = [0usize; 10];
    for r in &records {
        phase_counts[((r.arrival_s % 300.0) / 30.0) as usize % 10] += 1;
    }
    println!("arrivals per 30s phase bin: {phase_counts:?}");

    let dir = std::env::temp_dir().join("qoesim_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("burst_trace.csv");
    save_trace(&path, &records).unwrap();
    let reloaded = load_trace(&path).unwrap();
    assert_eq!(reloaded.len(), records.len());
    println!("round-tripped through {}", path.display());

    // Resolution fills in what the trace left blank, deterministically.
    let specs = resolve_trace(&reloaded, &ResolveConfig::default()).unwrap();
    let first = &specs[0];
    println!(
        "\nfirst request: arrival {:.2}s, {} input + {} output tokens,",
        first.arrival, first.input_len, first.output_len
    );
    println!(
        "               ttft target {:.2}s, reader speed {:.1} tokens/s",
        first.params.ttft_target, first.params.consumption_speed
    );

    let mean_in = specs.iter().map(|s| s.input_len).sum::<u64>() as f64 / specs.len() as f64;
    let mean_out = specs.iter().map(|s| s.output_len).sum::<u64>() as f64 / specs.len() as f64;
    println!("mean lengths: {mean_in:.0} in, {mean_out:.0} out");
}
