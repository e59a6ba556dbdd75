//! Token-streaming quality-of-experience metric.
//!
//! A streamed response is judged against an ideal timeline: the first token
//! should appear `ttft_target` seconds after the request arrives, and every
//! subsequent token should follow at the user's consumption speed. Tokens
//! that show up early sit in a buffer and are consumed at the paced rate;
//! tokens that show up late stall the user. The score compares the total
//! stall the user actually experienced against the worst case where every
//! token landed as late as the last one:
//!
//! * `s_delay`  - sum over tokens of (actual consumption - ideal consumption)
//! * `s_whole`  - same sum with every actual time replaced by the final one
//! * `value`    - `1 - s_delay / s_whole`, in `[0, 1]`
//!
//! A perfectly paced response scores 1. A response whose tokens all arrive
//! in one burst at the end scores 0. Mid-stream evaluation is supported via
//! [`evaluate_partial`], which scores only the tokens that are due by the
//! evaluation instant and pessimistically treats undelivered ones as landing
//! exactly at that instant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Comparison slack for floating-point time arithmetic, in seconds.
pub const TIME_EPS: f64 = 1e-9;

/// Errors from metric construction or evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum QoeError {
    #[error("qoe parameters must be positive and finite: ttft_target={ttft_target}, consumption_speed={consumption_speed}")]
    InvalidParams {
        ttft_target: f64,
        consumption_speed: f64,
    },
    #[error("timeline has no delivered tokens; use evaluate_partial for in-flight requests")]
    EmptyTimeline,
    #[error("delivery at {delivery} precedes arrival {arrival}")]
    DeliveryBeforeArrival { delivery: f64, arrival: f64 },
    #[error("delivery times must be nondecreasing: {prev} followed by {next}")]
    UnorderedDeliveries { prev: f64, next: f64 },
    #[error("evaluation instant {eval_time} precedes arrival {arrival}")]
    EvalBeforeArrival { eval_time: f64, arrival: f64 },
    #[error("expected token count must be at least 1")]
    ZeroExpected,
}

/// Per-request experience targets: time-to-first-token and reading pace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeParams {
    /// Seconds from arrival to the ideal first-token consumption instant.
    pub ttft_target: f64,
    /// Tokens per second the user consumes once the stream has started.
    pub consumption_speed: f64,
}

impl QoeParams {
    pub fn new(ttft_target: f64, consumption_speed: f64) -> Result<Self, QoeError> {
        if !(ttft_target > 0.0 && ttft_target.is_finite())
            || !(consumption_speed > 0.0 && consumption_speed.is_finite())
        {
            return Err(QoeError::InvalidParams {
                ttft_target,
                consumption_speed,
            });
        }
        Ok(Self {
            ttft_target,
            consumption_speed,
        })
    }

    /// Seconds between consecutive ideal consumption instants.
    pub fn token_gap(&self) -> f64 {
        1.0 / self.consumption_speed
    }
}

/// Delivery history of one streamed response.
///
/// `deliveries[i]` is when token `i + 1` reached the user's device (entered
/// the client-side buffer), not when it was consumed; consumption times are
/// derived by [`actual_consumption`].
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTimeline {
    pub arrival: f64,
    pub params: QoeParams,
    deliveries: Vec<f64>,
}

impl TokenTimeline {
    pub fn new(arrival: f64, params: QoeParams) -> Self {
        Self {
            arrival,
            params,
            deliveries: Vec::new(),
        }
    }

    /// Builds a timeline from an already-ordered delivery history.
    pub fn with_deliveries(
        arrival: f64,
        params: QoeParams,
        deliveries: Vec<f64>,
    ) -> Result<Self, QoeError> {
        let mut timeline = Self::new(arrival, params);
        for t in deliveries {
            timeline.push_delivery(t)?;
        }
        Ok(timeline)
    }

    /// Records the next token's delivery instant.
    pub fn push_delivery(&mut self, at: f64) -> Result<(), QoeError> {
        if at < self.arrival {
            return Err(QoeError::DeliveryBeforeArrival {
                delivery: at,
                arrival: self.arrival,
            });
        }
        if let Some(&prev) = self.deliveries.last() {
            if at < prev {
                return Err(QoeError::UnorderedDeliveries { prev, next: at });
            }
        }
        self.deliveries.push(at);
        Ok(())
    }

    pub fn deliveries(&self) -> &[f64] {
        &self.deliveries
    }

    pub fn delivered(&self) -> usize {
        self.deliveries.len()
    }

    /// Ideal consumption instant of token `index + 1`.
    ///
    /// Accumulated by repeated addition of the token gap - not the closed
    /// form `arrival + ttft + index / speed` - so the instants are bitwise
    /// identical to those produced by the pacing recurrence. The closed
    /// form can differ by an ulp, which would turn a perfectly on-schedule
    /// token into a micro-delay and keep exact scores off 1.0.
    pub fn ideal_time(&self, index: usize) -> f64 {
        let gap = self.params.token_gap();
        let mut t = self.arrival + self.params.ttft_target;
        for _ in 0..index {
            t += gap;
        }
        t
    }
}

/// Ideal consumption timeline for `n` tokens of a request arriving at
/// `arrival`: first token after the TTFT target, then one token per
/// consumption-speed interval. Instants are accumulated the same way the
/// pacing recurrence accumulates them (see [`TokenTimeline::ideal_time`]).
pub fn ideal_timeline(arrival: f64, params: &QoeParams, n: usize) -> Vec<f64> {
    let gap = params.token_gap();
    let mut t = arrival + params.ttft_target;
    (0..n)
        .map(|i| {
            if i > 0 {
                t += gap;
            }
            t
        })
        .collect()
}

/// Derives consumption instants from delivery instants.
///
/// The first token is consumed no earlier than its ideal instant (the user
/// is not staring at the screen before then); each later token is consumed
/// when it has both been delivered and the previous token has had a full
/// pacing interval on screen. Early deliveries therefore buffer, and a late
/// delivery cascades into later tokens.
pub fn actual_consumption(delivery_times: &[f64], ideal_times: &[f64], speed: f64) -> Vec<f64> {
    assert_eq!(
        delivery_times.len(),
        ideal_times.len(),
        "delivery and ideal timelines must have equal length"
    );
    let gap = 1.0 / speed;
    let mut actual = Vec::with_capacity(delivery_times.len());
    for (i, &delivered) in delivery_times.iter().enumerate() {
        let floor = if i == 0 {
            ideal_times[0]
        } else {
            actual[i - 1] + gap
        };
        actual.push(delivered.max(floor));
    }
    actual
}

/// Final score of a streamed response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeScore {
    /// Total seconds of consumption delay accumulated across tokens.
    pub s_delay: f64,
    /// Worst-case delay if every token had landed with the last one.
    pub s_whole: f64,
    /// `1 - s_delay / s_whole`, clamped to `[0, 1]`; 1 when `s_whole` is 0.
    pub value: f64,
}

impl QoeScore {
    fn from_sums(s_delay: f64, s_whole: f64) -> Self {
        // A zero s_whole means the last token was consumed exactly on its
        // ideal instant, which forces every earlier token on schedule too.
        let value = if s_whole <= 0.0 {
            1.0
        } else {
            (1.0 - s_delay / s_whole).clamp(0.0, 1.0)
        };
        Self {
            s_delay,
            s_whole,
            value,
        }
    }
}

/// Scores a fully delivered response over all of its tokens.
pub fn qoe(timeline: &TokenTimeline) -> Result<QoeScore, QoeError> {
    let n = timeline.delivered();
    if n == 0 {
        return Err(QoeError::EmptyTimeline);
    }
    let ideal = ideal_timeline(timeline.arrival, &timeline.params, n);
    let actual = actual_consumption(
        timeline.deliveries(),
        &ideal,
        timeline.params.consumption_speed,
    );
    let last = actual[n - 1];
    let mut s_delay = 0.0;
    let mut s_whole = 0.0;
    for i in 0..n {
        s_delay += actual[i] - ideal[i];
        s_whole += last - ideal[i];
    }
    Ok(QoeScore::from_sums(s_delay, s_whole))
}

/// Scores an in-flight response as observed at `eval_time`.
///
/// Only tokens whose ideal consumption instant is due by `eval_time` are
/// scored (at least one, at most `total_expected`). Tokens that cannot be
/// consumed by then - undelivered ones, and delivered ones still stuck
/// behind the pacing cascade - are treated as consumed exactly at
/// `eval_time`; they do not cascade into one another. A request evaluated
/// before any token is due scores 1 (nothing has gone wrong yet); a request
/// with nothing delivered long after its deadline scores 0.
pub fn evaluate_partial(
    timeline: &TokenTimeline,
    eval_time: f64,
    total_expected: u64,
) -> Result<QoeScore, QoeError> {
    if eval_time < timeline.arrival {
        return Err(QoeError::EvalBeforeArrival {
            eval_time,
            arrival: timeline.arrival,
        });
    }
    if total_expected == 0 {
        return Err(QoeError::ZeroExpected);
    }

    let params = &timeline.params;
    let gap = params.token_gap();
    let first_ideal = timeline.arrival + params.ttft_target;

    // Tokens due by eval_time, computed arithmetically then nudged so the
    // result agrees with direct comparisons at floating-point boundaries.
    let mut m = if first_ideal > eval_time {
        1
    } else {
        let est = ((eval_time - first_ideal) * params.consumption_speed).floor() as u64 + 1;
        est.min(total_expected).max(1)
    };
    while m < total_expected && timeline.ideal_time(m as usize) <= eval_time {
        m += 1;
    }
    while m > 1 && timeline.ideal_time(m as usize - 1) > eval_time {
        m -= 1;
    }
    let m = m as usize;

    let scored_deliveries = &timeline.deliveries()[..timeline.delivered().min(m)];
    let mut s_delay = 0.0;
    let mut ideal_sum = 0.0;
    let mut last_actual = 0.0;
    let mut prev_raw = f64::NEG_INFINITY;
    let mut ideal_i = first_ideal;
    for i in 0..m {
        if i > 0 {
            ideal_i += gap;
        }
        // Raw pacing cascade over delivered tokens; infinity marks tokens
        // that cannot reach the user within the window.
        let raw = if i < scored_deliveries.len() {
            let floor = if i == 0 { ideal_i } else { prev_raw + gap };
            scored_deliveries[i].max(floor)
        } else {
            f64::INFINITY
        };
        prev_raw = raw;
        let actual_i = raw.min(eval_time).max(ideal_i);
        s_delay += actual_i - ideal_i;
        ideal_sum += ideal_i;
        last_actual = actual_i;
    }
    let s_whole = m as f64 * last_actual - ideal_sum;
    Ok(QoeScore::from_sums(s_delay, s_whole))
}
