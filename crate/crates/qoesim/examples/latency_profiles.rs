//! Walks through the serving-cost model: decode iteration latency as a
//! function of batch size, prefill cost, and the two preemption
//! mechanisms (swapping KV state to host memory vs dropping it and
//! recomputing on resume).
//!
//! Run with: `cargo run --example latency_profiles`

use qoesim::{DecodePoint, LatencyProfile, PreemptMechanism};

fn main() {
    let profile = LatencyProfile::synthetic_default();

    println!("decode iteration latency (piecewise-linear between measured points):");
    for batch in [1u32, 8, 32, 90, 128, 256, 512, 600] {
        let iter = profile.decode_latency(batch);
        println!(
            "  batch {batch:>3}: {:>6.1} ms/iteration = {:>5.1} tokens/s per request",
            iter * 1e3,
            1.0 / iter
        );
    }

    println!("\nprefill latency (input tokens / prefill throughput):");
    for input in [200u64, 2_000, 20_000] {
        println!(
            "  {input:>6} input tokens: {:>6.3} s",
            profile.prefill_latency(input)
        );
    }

    println!("\npreemption cost by mechanism (pause cost + resume cost):");
    for context in [500u64, 2_000, 8_000] {
        let (swap_out, swap_in) = profile.preemption_overhead(context, PreemptMechanism::Swap);
        let (rec_out, rec_in) = profile.preemption_overhead(context, PreemptMechanism::Recompute);
        let picked = profile.select_mechanism(context);
        println!(
            "  context {context:>5}: swap {:.3}s+{:.3}s, recompute {:.3}s+{:.3}s -> picks {picked:?}",
            swap_out, swap_in, rec_out, rec_in
        );
    }

    // Swapping moves the KV state twice (out and back in); recomputing
    // pays a fresh prefill. Which is cheaper is a pure bandwidth race,
    // so the choice flips with the hardware, not the request.
    let slow_link = LatencyProfile::new(
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
        5_000.0,
        8_000.0, // less than twice the prefill throughput
        60_000,
    )
    .unwrap();
    println!(
        "\nsame request on a slow swap link: picks {:?}",
        slow_link.select_mechanism(2_000)
    );

    println!(
        "\nlargest batch keeping one iteration under 100 ms: {}",
        profile.max_batch_within_latency(0.1, 512)
    );
}
