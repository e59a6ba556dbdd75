//! Runs the same bursty workload under three scheduling policies and
//! prints the comparison: QoE-aware batch composition ("andes"),
//! least-quality-slack-first ("lqsf"), and plain FCFS.
//!
//! Everything is deterministic - identical trace, identical hardware
//! profile - so the table isolates the policy.
//!
//! Run with: `cargo run --example compare_policies` (release mode is
//! noticeably faster).

use qoesim::analysis::comparison_table;
use qoesim::{run_experiment, ArrivalConfig, ExperimentConfig, PolicyKind};

fn main() {
    let mut rows = Vec::new();
    for policy in [PolicyKind::Andes, PolicyKind::Lqsf, PolicyKind::Fcfs] {
        let mut cfg = ExperimentConfig::default();
        cfg.workload.seed = 9;
        cfg.workload.arrival = ArrivalConfig::Burst {
            mean_rate_rps: 0.7,
            intensity: 2.0,
            duration_frac: 0.35,
            cycle_len_s: 300.0,
            duration_s: 480.0,
        };
        cfg.policy.policy = policy;

        let report = run_experiment(&cfg).unwrap();
        let s = &report.summary;
        println!(
            "{policy:?}: {} finished / {} total, {} preemptions, peak queue {}",
            s.finished, s.total_requests, s.total_preemptions, s.peak_queue
        );
        rows.push((format!("{policy:?}").to_lowercase(), report.summary));
    }

    println!("\n{}", comparison_table(&rows));
}
