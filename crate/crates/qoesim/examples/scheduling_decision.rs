//! Builds one scheduling decision by hand: estimate each request's gain,
//! pack the batch, then refine the result against transition overheads.
//!
//! The scene: three requests are running - one far ahead of its reader
//! (a deep buffer), two exactly on pace (any stall costs them) - while
//! two wait in the queue: one starving since its first-token deadline
//! passed three seconds ago, one whose reader will not even look for
//! another 196 seconds.
//!
//! The packer is deliberately blind to transition overheads, so it fills
//! the spare memory with the patient request too - on paper that costs
//! nothing. The refiner then charges each admission the stall it causes
//! (evictions plus its own prefill) against everyone kept decoding, and
//! vetoes the admission that gains nothing.
//!
//! Run with: `cargo run --example scheduling_decision`

use qoesim::qoe::ideal_timeline;
use qoesim::{
    batch_bounds, estimate_gain, refine, solve, DecodePoint, LatencyProfile, QoeParams,
    RequestSnapshot, SnapshotState, SolverConfig, TokenTimeline,
};

fn main() {
    let profile = LatencyProfile::new(
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
        1_000.0, // prefill: admitting a waiter stalls the batch for real
        3_000.0, // swap: evicting a runner is not free either
        1_700,
    )
    .unwrap();

    let p = QoeParams::new(1.0, 5.0).unwrap();
    let now = 4.0;

    // Runner far ahead: 40 tokens delivered instantly at arrival.
    let ahead = TokenTimeline::with_deliveries(0.0, p, vec![0.0; 40]).unwrap();
    // Runners exactly on pace: their 16th token lands at `now`.
    let on_pace_a = TokenTimeline::with_deliveries(0.0, p, ideal_timeline(0.0, &p, 16)).unwrap();
    let on_pace_b = TokenTimeline::with_deliveries(0.0, p, ideal_timeline(0.0, &p, 16)).unwrap();
    // Waiters: nothing delivered. One is long overdue; the other's reader
    // does not expect a first token for minutes.
    let starving = TokenTimeline::new(0.0, p);
    let patient = TokenTimeline::new(0.0, QoeParams::new(200.0, 5.0).unwrap());

    let snapshot = |id, timeline, state, context_len, generated| RequestSnapshot {
        id,
        timeline,
        state,
        context_len,
        generated,
        expected_total: if generated > 0 { 200 } else { 100 },
    };
    let snaps = vec![
        snapshot(1, &ahead, SnapshotState::Running, 350, 40),
        snapshot(2, &on_pace_a, SnapshotState::Running, 350, 16),
        snapshot(3, &on_pace_b, SnapshotState::Running, 350, 16),
        snapshot(4, &starving, SnapshotState::Queued, 300, 0),
        snapshot(5, &patient, SnapshotState::Queued, 300, 0),
    ];

    let cfg = SolverConfig::default();
    let bounds = batch_bounds(&snaps, &profile).unwrap();
    println!(
        "batch bounds {}..={} (reader-pace floor, KV-capacity ceiling)",
        bounds.b_min, bounds.b_max
    );

    println!("\nprojected QoE at the horizon, waiting vs served:");
    for s in &snaps {
        let est = estimate_gain(s, now, cfg.horizon, &profile, &[bounds.b_max]);
        println!(
            "  request {} ({:?}, {:>2} tokens out): wait {:.3} -> serve {:.3}, gain {:+.3}",
            s.id,
            s.state,
            s.generated,
            est.q_wait,
            est.q_serve(bounds.b_max),
            est.gain(bounds.b_max)
        );
    }

    let decision = solve(&snaps, now, &profile, &cfg).unwrap();
    println!(
        "\npacker (overhead-blind): serve {:?}, admit {:?}, preempt {:?}",
        decision.serve_set, decision.admit_list, decision.preempt_list
    );

    let refined = refine(&decision, &snaps, now, &profile, &cfg);
    println!(
        "refined against overheads: serve {:?}, admit {:?}, preempt {:?}",
        refined.serve_set, refined.admit_list, refined.preempt_list
    );
    println!(
        "\nthe packer took request 5 because spare memory made it free on paper;\n\
         the refiner vetoed it: a {:.2}s prefill stall delays both on-pace readers\n\
         for a request whose reader gains nothing from an early start.",
        profile.prefill_latency(300)
    );
}
