//! Shows client-side pacing: tokens generated in bursts are released to
//! the reader at their consumption speed, so the visible stream is smooth
//! even when the server is not.
//!
//! Pacing never changes the QoE score - a token can only be read at its
//! paced instant whether or not the UI dumps it early - but it changes
//! what the user sees: no text avalanche after a stall, and leftover
//! buffer is flushed the moment the stream finishes.
//!
//! Run with: `cargo run --example token_pacer`

use qoesim::{qoe, QoeParams, TokenPacer, TokenTimeline};

fn main() {
    let params = QoeParams::new(1.0, 5.0).unwrap();
    let mut pacer = TokenPacer::new(0.0, params);

    // The server generates 12 tokens in three bursts: a fast opening
    // chunk, a quick follow-up, a long stall, then the rest all at once.
    // In between, `surplus` reports how many seconds of reading material
    // the released-but-unread buffer holds at that moment.
    pacer.push(4, 1.0).unwrap();
    pacer.push(2, 1.1).unwrap();
    println!(
        "6 tokens by 1.1s; buffer holds {:.1}s of reading at 1.1s, {:.1}s at 2.1s",
        pacer.surplus(1.1),
        pacer.surplus(2.1)
    );
    println!(
        "nothing new until 6.0s; buffer at 3.0s: {:.1}s (the reader starves)",
        pacer.surplus(3.0)
    );
    pacer.push(6, 6.0).unwrap();

    println!("\ntoken  generated  released  (gap to previous release)");
    let mut prev: Option<f64> = None;
    for (i, (&gen, &rel)) in pacer
        .timeline()
        .deliveries()
        .iter()
        .zip(pacer.release_times())
        .enumerate()
    {
        let gap = prev.map_or(String::from("      -"), |p| format!("{:+7.2}s", rel - p));
        println!("  {:>2}    {gen:>6.2}s   {rel:>6.2}s   {gap}", i + 1);
        prev = Some(rel);
    }

    // Identical scores, computed two ways: from the paced release instants
    // and from the raw generation instants through the consumption model.
    let released =
        TokenTimeline::with_deliveries(0.0, params, pacer.release_times().to_vec()).unwrap();
    println!(
        "\nQoE from paced releases {:.6} == from raw deliveries {:.6}",
        qoe(&released).unwrap().value,
        qoe(pacer.timeline()).unwrap().value
    );

    // When the stream ends, whatever is still buffered appears at once:
    // there is nothing left to pace against. The score is unaffected.
    pacer.flush_on_finish(6.0);
    let last_display = *pacer.display_times().last().unwrap();
    println!("after finish at 6.0s the last token displays at {last_display:.2}s");
}
