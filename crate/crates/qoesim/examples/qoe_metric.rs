//! Scores a few delivery patterns with the streaming QoE metric.
//!
//! The metric compares when tokens actually became readable against an
//! ideal timeline (first token by the TTFT target, then one token every
//! `1/consumption_speed` seconds). Tokens arriving early sit in a buffer
//! and keep the reader fed through later stalls; tokens arriving late
//! push every subsequent token back. The score is the fraction of the
//! total slack that was *not* wasted on delays, clamped to [0, 1].
//!
//! Run with: `cargo run --example qoe_metric`

use qoesim::qoe::ideal_timeline;
use qoesim::{evaluate_partial, qoe, QoeParams, TokenTimeline};

fn score(label: &str, arrival: f64, params: QoeParams, deliveries: Vec<f64>) {
    let timeline = TokenTimeline::with_deliveries(arrival, params, deliveries).unwrap();
    let s = qoe(&timeline).unwrap();
    println!(
        "{label:<28} value {:.4}   (delay {:>7.2}s of {:>7.2}s whole)",
        s.value, s.s_delay, s.s_whole
    );
}

fn main() {
    // A reader at 5 tokens/s who expects the first token within a second.
    let p = QoeParams::new(1.0, 5.0).unwrap();
    let n = 50;

    // Exactly on the ideal timeline: a perfect score.
    score("on the ideal timeline", 0.0, p, ideal_timeline(0.0, &p, n));

    // The whole answer lands instantly: early tokens never hurt.
    score("everything at arrival", 0.0, p, vec![0.0; n]);

    // Generation runs at half the reading speed: every token is later
    // than the last, and most of the stream is spent waiting.
    score(
        "generated at half speed",
        0.0,
        p,
        (0..n).map(|i| 1.0 + i as f64 * 0.4).collect(),
    );

    // On pace, but a 6-second stall hits mid-stream. The first half was
    // delivered just in time, so there is no buffer to ride it out.
    let stalled: Vec<f64> = ideal_timeline(0.0, &p, n)
        .into_iter()
        .enumerate()
        .map(|(i, t)| if i >= 25 { t + 6.0 } else { t })
        .collect();
    score("6s stall at the midpoint", 0.0, p, stalled);

    // The same stall, but generation ran at double speed beforehand: the
    // buffered tokens cover most of the gap.
    let buffered: Vec<f64> = (0..n)
        .map(|i| {
            let t = 1.0 + i as f64 * 0.1;
            if i >= 25 {
                t + 6.0
            } else {
                t
            }
        })
        .collect();
    score("same stall, buffered", 0.0, p, buffered);

    // Mid-stream evaluation: ten tokens delivered on pace, then silence.
    // The pessimistic partial score charges the remaining tokens as if
    // they all landed at the evaluation instant.
    let partial = TokenTimeline::with_deliveries(0.0, p, ideal_timeline(0.0, &p, 10)).unwrap();
    println!();
    for eval in [3.0, 6.0, 12.0, 30.0] {
        let s = evaluate_partial(&partial, eval, n as u64).unwrap();
        println!("10 of {n} tokens, silent since 2.8s, evaluated at {eval:>4.1}s: {:.4}", s.value);
    }
}
