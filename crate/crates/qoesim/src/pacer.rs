//! Client-side token pacing.
//!
//! The server may generate far faster than a person reads. A [`TokenPacer`]
//! models the client buffer: tokens arrive (possibly in chunks), queue up,
//! and are shown to the user no faster than the configured consumption
//! speed, starting no earlier than the TTFT target. The pacer is the
//! incremental counterpart of [`crate::qoe::actual_consumption`]: releasing
//! tokens one push at a time must produce exactly the timestamps that the
//! batch recurrence produces on the full delivery history.
//!
//! [`DeliveryChunker`] models the transmission side: the server may hold
//! generated tokens until a chunk fills (or the response finishes) before
//! putting them on the wire.

use crate::qoe::{QoeParams, QoeError, TokenTimeline};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PacerError {
    #[error("cannot push tokens after the stream finished")]
    PushAfterFinish,
    #[error("pushes must move forward in time: {prev} then {next}")]
    NonMonotonePush { prev: f64, next: f64 },
    #[error(transparent)]
    Timeline(#[from] QoeError),
}

/// Paced release of a streamed response to one user.
#[derive(Debug, Clone)]
pub struct TokenPacer {
    timeline: TokenTimeline,
    /// Instants at which tokens leave the buffer on the paced schedule;
    /// index-aligned with the timeline's deliveries. QoE is scored on these.
    release_times: Vec<f64>,
    /// Instants at which tokens become visible to the user; equal to the
    /// release times except for tokens pulled forward by an end-of-response
    /// flush.
    display_times: Vec<f64>,
    finished: bool,
}

impl TokenPacer {
    pub fn new(arrival: f64, params: QoeParams) -> Self {
        Self {
            timeline: TokenTimeline::new(arrival, params),
            release_times: Vec::new(),
            display_times: Vec::new(),
            finished: false,
        }
    }

    /// Delivery history as seen by the metric.
    pub fn timeline(&self) -> &TokenTimeline {
        &self.timeline
    }

    pub fn release_times(&self) -> &[f64] {
        &self.release_times
    }

    pub fn display_times(&self) -> &[f64] {
        &self.display_times
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Accepts `count` tokens delivered at instant `at` and schedules their
    /// paced release: no release before the first token's ideal instant,
    /// and consecutive releases at least one consumption interval apart.
    pub fn push(&mut self, count: usize, at: f64) -> Result<(), PacerError> {
        if self.finished {
            return Err(PacerError::PushAfterFinish);
        }
        if let Some(&prev) = self.timeline.deliveries().last() {
            if at < prev {
                return Err(PacerError::NonMonotonePush { prev, next: at });
            }
        }
        let gap = self.timeline.params.token_gap();
        for _ in 0..count {
            self.timeline.push_delivery(at)?;
            let floor = match self.release_times.last() {
                None => self.timeline.ideal_time(0),
                Some(&prev) => prev + gap,
            };
            let release = at.max(floor);
            self.release_times.push(release);
            self.display_times.push(release);
        }
        Ok(())
    }

    /// Marks the stream complete and makes any still-buffered tokens
    /// visible immediately. Release times (and therefore the score) keep
    /// the paced schedule; only display times move forward.
    pub fn flush_on_finish(&mut self, at: f64) {
        self.finished = true;
        for (display, &release) in self.display_times.iter_mut().zip(&self.release_times) {
            if release > at {
                *display = at.max(self.timeline.arrival);
            }
        }
    }

    /// Seconds of reading material buffered at instant `at`: how long the
    /// user can keep consuming at full pace before the buffer runs dry.
    /// Zero when nothing is pending; infinite once the stream finished.
    pub fn surplus(&self, at: f64) -> f64 {
        if self.finished {
            return f64::INFINITY;
        }
        match self.release_times.last() {
            Some(&last) if last >= at => {
                last + self.timeline.params.token_gap() - at
            }
            _ => 0.0,
        }
    }
}

/// Groups generated tokens into fixed-size transmission chunks.
///
/// `on_token` is called once per generated token and returns how many
/// tokens to put on the wire now (0 while the chunk is still filling);
/// `flush` returns whatever remains when the response ends.
#[derive(Debug, Clone)]
pub struct DeliveryChunker {
    chunk_size: usize,
    pending: usize,
}

impl DeliveryChunker {
    /// A chunk size of 0 is treated as 1 (immediate transmission).
    pub fn new(chunk_size: usize) -> Self {
        Self {
            chunk_size: chunk_size.max(1),
            pending: 0,
        }
    }

    pub fn on_token(&mut self) -> usize {
        self.pending += 1;
        if self.pending >= self.chunk_size {
            std::mem::take(&mut self.pending)
        } else {
            0
        }
    }

    pub fn flush(&mut self) -> usize {
        std::mem::take(&mut self.pending)
    }

    pub fn pending(&self) -> usize {
        self.pending
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qoe::{actual_consumption, ideal_timeline, qoe};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(ttft: f64, speed: f64) -> QoeParams {
        QoeParams::new(ttft, speed).unwrap()
    }

    #[test]
    fn an_early_burst_paces_out_on_the_ideal_schedule() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 2.0));
        pacer.push(4, 1.0).unwrap();
        assert_eq!(pacer.release_times(), &[1.0, 1.5, 2.0, 2.5]);
    }

    #[test]
    fn a_late_token_releases_immediately_and_cascades() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 2.0));
        pacer.push(1, 1.0).unwrap();
        pacer.push(1, 3.0).unwrap();
        pacer.push(1, 3.0).unwrap();
        assert_eq!(pacer.release_times(), &[1.0, 3.0, 3.5]);
    }

    #[test]
    fn pushes_must_be_time_ordered_and_stop_after_finish() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 2.0));
        pacer.push(1, 2.0).unwrap();
        assert!(matches!(
            pacer.push(1, 1.5),
            Err(PacerError::NonMonotonePush { .. })
        ));
        pacer.flush_on_finish(2.0);
        assert_eq!(pacer.push(1, 3.0), Err(PacerError::PushAfterFinish));
    }

    #[test]
    fn surplus_counts_buffered_reading_time() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 1.0));
        pacer.push(5, 1.0).unwrap();
        // Releases at 1..=5; at t=1 the user has five seconds of material.
        assert!((pacer.surplus(1.0) - 5.0).abs() < 1e-12);
        assert!((pacer.surplus(2.5) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn surplus_is_zero_mid_stream_with_an_empty_buffer() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 1.0));
        pacer.push(1, 1.0).unwrap();
        assert_eq!(pacer.surplus(2.5), 0.0);
        assert_eq!(TokenPacer::new(0.0, params(1.0, 1.0)).surplus(0.5), 0.0);
    }

    #[test]
    fn surplus_is_infinite_once_finished() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 1.0));
        pacer.push(2, 1.0).unwrap();
        pacer.flush_on_finish(1.0);
        assert_eq!(pacer.surplus(1.5), f64::INFINITY);
    }

    #[test]
    fn flush_moves_display_forward_but_not_the_scored_schedule() {
        let mut pacer = TokenPacer::new(0.0, params(1.0, 1.0));
        pacer.push(5, 1.0).unwrap();
        pacer.flush_on_finish(2.0);
        assert_eq!(pacer.release_times(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(pacer.display_times(), &[1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn flush_never_worsens_the_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let p = params(rng.gen_range(0.5..2.0), rng.gen_range(0.5..8.0));
            let mut pacer = TokenPacer::new(0.0, p);
            let mut t = 0.0;
            for _ in 0..rng.gen_range(1..20) {
                t += rng.gen_range(0.0..1.0);
                pacer.push(rng.gen_range(1..4), t).unwrap();
            }
            pacer.flush_on_finish(t);
            let paced =
                TokenTimeline::with_deliveries(0.0, p, pacer.release_times().to_vec()).unwrap();
            let flushed =
                TokenTimeline::with_deliveries(0.0, p, pacer.display_times().to_vec()).unwrap();
            let paced_score = qoe(&paced).unwrap().value;
            let flushed_score = qoe(&flushed).unwrap().value;
            assert!(
                flushed_score >= paced_score - 1e-9,
                "flush worsened the score: {paced_score} -> {flushed_score}"
            );
        }
    }

    #[test]
    fn incremental_releases_match_the_batch_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..300 {
            let p = params(rng.gen_range(0.2..2.0), rng.gen_range(0.5..15.0));
            let arrival = rng.gen_range(0.0..5.0);
            let mut pacer = TokenPacer::new(arrival, p);
            let mut t = arrival;
            for _ in 0..rng.gen_range(1..15) {
                t += rng.gen_range(0.0..0.8);
                pacer.push(rng.gen_range(1..5), t).unwrap();
            }
            let n = pacer.timeline().delivered();
            let ideal = ideal_timeline(arrival, &p, n);
            let expect =
                actual_consumption(pacer.timeline().deliveries(), &ideal, p.consumption_speed);
            for (a, b) in pacer.release_times().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-9, "pacer {a} vs recurrence {b}");
            }
        }
    }

    #[test]
    fn chunker_groups_tokens_and_flushes_the_remainder() {
        let mut chunker = DeliveryChunker::new(4);
        let mut sent = Vec::new();
        for _ in 0..10 {
            let n = chunker.on_token();
            if n > 0 {
                sent.push(n);
            }
        }
        assert_eq!(sent, vec![4, 4]);
        assert_eq!(chunker.pending(), 2);
        assert_eq!(chunker.flush(), 2);
        assert_eq!(chunker.pending(), 0);
    }

    #[test]
    fn chunk_size_zero_degrades_to_immediate_transmission() {
        let mut chunker = DeliveryChunker::new(0);
        assert_eq!(chunker.on_token(), 1);
        assert_eq!(chunker.on_token(), 1);
    }
}
