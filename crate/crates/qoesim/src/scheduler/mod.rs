//! QoE-aware scheduling.
//!
//! Once per decode iteration the engine may recompose the batch. The
//! pipeline here mirrors that decision flow:
//!
//! 1. [`should_trigger`] gates the expensive path: recomposition is only
//!    considered when KV occupancy crosses a high watermark or the current
//!    iteration latency is too slow for the fastest reader being served.
//! 2. [`estimate_gain`] scores each candidate: how much better its QoE
//!    looks `horizon` seconds from now if it is served at a given batch
//!    size versus left waiting with whatever it has buffered.
//! 3. [`batch_bounds`] prunes the batch sizes worth probing: no larger
//!    than memory allows, no smaller than the size that still overfeeds
//!    the fastest reader.
//! 4. [`solve`] packs the batch per probed size (greedy or exact DP) and
//!    keeps the best objective.
//! 5. [`refine`] prunes admit/preempt pairs whose preemption and resume
//!    stalls would cost the ongoing requests more QoE than the admitted
//!    request gains.
//!
//! Baseline policies (FCFS and a longest-queue-style gain sort) live in
//! [`policy`].

pub mod knapsack;
pub mod policy;

use crate::latency::{LatencyProfile, PreemptMechanism};
use crate::qoe::{evaluate_partial, QoeParams, TokenTimeline};
use knapsack::{dp_solve, greedy_pack, DpBudgetExceeded, PackItem, PackOutcome};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub type RequestId = u64;

/// KV occupancy fraction above which recomposition is always considered.
pub const DEFAULT_WATERMARK: f64 = 0.90;
/// Default gain-estimation horizon in seconds.
pub const DEFAULT_HORIZON: f64 = 2.0;
/// Default cap on DP table cells per solve.
pub const DEFAULT_DP_BUDGET: u64 = 100_000_000;

/// Objective slack when comparing outcomes across batch sizes: differences
/// below this are ties, resolved toward the larger serve set.
const OBJECTIVE_EPS: f64 = 1e-12;
/// Stalls whose total QoE loss is below this are harmless; the refiner
/// keeps such admissions even when their gain is zero.
const HARMLESS_LOSS: f64 = 1e-12;
/// Scores within this of 1.0 count as perfect for the perfect-count
/// objective.
const PERFECT_EPS: f64 = 1e-9;

/// Scheduling-relevant lifecycle state of a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotState {
    /// Never prefilled; resuming costs a prefill over the prompt.
    Queued,
    /// In the current decode batch.
    Running,
    /// Evicted earlier; resuming costs a swap-in or a recompute prefill
    /// depending on the mechanism chosen at eviction time.
    Preempted(PreemptMechanism),
    Finished,
}

/// Immutable view of one request at a scheduling instant.
#[derive(Debug, Clone, Copy)]
pub struct RequestSnapshot<'a> {
    pub id: RequestId,
    pub timeline: &'a TokenTimeline,
    pub state: SnapshotState,
    /// KV tokens held if served: prompt plus tokens generated so far.
    pub context_len: u64,
    pub generated: u64,
    pub expected_total: u64,
}

impl RequestSnapshot<'_> {
    pub fn arrival(&self) -> f64 {
        self.timeline.arrival
    }

    pub fn params(&self) -> &QoeParams {
        &self.timeline.params
    }

    pub fn remaining(&self) -> u64 {
        self.expected_total.saturating_sub(self.generated)
    }

    pub fn is_running(&self) -> bool {
        self.state == SnapshotState::Running
    }

    /// Seconds before this request can join decode if admitted now.
    pub fn resume_overhead(&self, profile: &LatencyProfile) -> f64 {
        match self.state {
            SnapshotState::Running | SnapshotState::Finished => 0.0,
            SnapshotState::Queued => profile.prefill_latency(self.context_len),
            SnapshotState::Preempted(mechanism) => {
                profile.preemption_overhead(self.context_len, mechanism).1
            }
        }
    }
}

/// Gain inputs for one request: projected QoE at the horizon if served at
/// each probed batch size, versus if left waiting on its buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    pub q_serve_by_batch: Vec<(u32, f64)>,
    pub q_wait: f64,
    pub horizon: f64,
}

impl GainEstimate {
    pub fn q_serve(&self, batch: u32) -> f64 {
        self.q_serve_by_batch
            .iter()
            .find(|(b, _)| *b == batch)
            .map(|(_, q)| *q)
            .expect("batch size was not probed by this estimate")
    }

    /// Served-minus-waiting QoE at `batch`, floored at zero.
    pub fn gain(&self, batch: u32) -> f64 {
        (self.q_serve(batch) - self.q_wait).max(0.0)
    }
}

/// Projects a request's QoE `horizon` seconds ahead under two futures:
/// waiting (no new tokens; buffered ones keep pacing out) and being served
/// (one new token per iteration at each probed batch size, starting after
/// the request's own resume or prefill cost). System-wide stalls imposed on
/// other requests are not modeled here; [`refine`] charges those.
pub fn estimate_gain(
    req: &RequestSnapshot,
    now: f64,
    horizon: f64,
    profile: &LatencyProfile,
    batch_sizes: &[u32],
) -> GainEstimate {
    let eval = now + horizon;
    let q_wait = evaluate_partial(req.timeline, eval, req.expected_total)
        .expect("snapshot timelines evaluate cleanly")
        .value;
    let start = now + req.resume_overhead(profile);
    let last_delivery = req
        .timeline
        .deliveries()
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY);
    let mut q_serve_by_batch = Vec::with_capacity(batch_sizes.len());
    for &batch in batch_sizes {
        let tau = profile.decode_latency(batch);
        let mut synth = req.timeline.clone();
        let mut emitted = 0;
        let mut t = start + tau;
        while emitted < req.remaining() && t <= eval {
            synth
                .push_delivery(t.max(last_delivery))
                .expect("synthesized deliveries are time-ordered");
            t += tau;
            emitted += 1;
        }
        let q_serve = evaluate_partial(&synth, eval, req.expected_total)
            .expect("snapshot timelines evaluate cleanly")
            .value;
        q_serve_by_batch.push((batch, q_serve));
    }
    GainEstimate {
        q_serve_by_batch,
        q_wait,
        horizon,
    }
}

/// Scheduling priority: gain per KV token held. Dividing by the context
/// length prefers freeing-or-filling many small requests over one large
/// one with the same gain.
pub fn priority(gain: &GainEstimate, batch: u32, context_len: u64) -> f64 {
    gain.gain(batch) / context_len.max(1) as f64
}

/// Range of batch sizes worth probing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverBounds {
    /// Smallest batch that does not overfeed the fastest reader (floored
    /// at 1, capped at `b_max`).
    pub b_min: u32,
    /// Largest count of candidates that fits in KV capacity, smallest
    /// contexts first.
    pub b_max: u32,
}

/// Computes the probe range; `None` when not even the smallest candidate
/// fits in memory (the schedule must be empty).
pub fn batch_bounds(
    snapshots: &[RequestSnapshot],
    profile: &LatencyProfile,
) -> Option<SolverBounds> {
    let mut lens: Vec<u64> = snapshots
        .iter()
        .filter(|s| s.state != SnapshotState::Finished)
        .map(|s| s.context_len)
        .collect();
    if lens.is_empty() {
        return None;
    }
    lens.sort_unstable();
    let mut used = 0u64;
    let mut b_max = 0u32;
    for len in lens {
        match used.checked_add(len) {
            Some(total) if total <= profile.kv_capacity => {
                used = total;
                b_max += 1;
            }
            _ => break,
        }
    }
    if b_max == 0 {
        return None;
    }
    let stringent = fastest_reader(snapshots)?;
    let b_min = profile.max_batch_within_latency(1.0 / stringent, b_max);
    Some(SolverBounds { b_min, b_max })
}

fn fastest_reader(snapshots: &[RequestSnapshot]) -> Option<f64> {
    snapshots
        .iter()
        .filter(|s| s.state != SnapshotState::Finished)
        .map(|s| s.params().consumption_speed)
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Whether batch recomposition is worth solving right now: KV occupancy at
/// or above the watermark, or the current iteration latency too slow for
/// the fastest reader among ongoing requests. Off-trigger, the engine
/// keeps the current batch and admits arrivals first-come-first-served
/// into spare capacity.
pub fn should_trigger(
    kv_occupancy: f64,
    current_decode_latency: f64,
    snapshots: &[RequestSnapshot],
    watermark: f64,
) -> bool {
    let Some(stringent) = fastest_reader(snapshots) else {
        return false;
    };
    kv_occupancy >= watermark || current_decode_latency > 1.0 / stringent
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Priority-sorted packing; approximate but fast.
    Greedy,
    /// Exact optimum per batch size; guarded by `dp_budget`.
    Dp,
}

/// What "gain" means when scoring a candidate batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Maximize total projected QoE improvement (default).
    Average,
    /// Raise the floor: only requests projected to fall below the current
    /// worst QoE are worth serving.
    MaxMin,
    /// Maximize the count of requests kept at a perfect score.
    PerfectCount,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub solver: SolverKind,
    pub objective: Objective,
    /// Gain-estimation horizon in seconds.
    pub horizon: f64,
    pub watermark: f64,
    pub greedy_skip_unfit: bool,
    pub dp_budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Greedy,
            objective: Objective::Average,
            horizon: DEFAULT_HORIZON,
            watermark: DEFAULT_WATERMARK,
            greedy_skip_unfit: false,
            dp_budget: DEFAULT_DP_BUDGET,
        }
    }
}

/// A batch recomposition: who is in the next batch, and the admission and
/// eviction deltas relative to the currently running set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub serve_set: BTreeSet<RequestId>,
    /// `serve_set.len()`; the realized batch size (the solver may not fill
    /// its probed size when memory binds first).
    pub batch_size: u32,
    /// Serve-set members not currently running, descending priority.
    pub admit_list: Vec<RequestId>,
    /// Currently running requests dropped from the batch, ascending
    /// priority (cheapest to sacrifice first).
    pub preempt_list: Vec<RequestId>,
    pub objective_value: f64,
}

impl ScheduleDecision {
    pub fn empty() -> Self {
        Self {
            serve_set: BTreeSet::new(),
            batch_size: 0,
            admit_list: Vec::new(),
            preempt_list: Vec::new(),
            objective_value: 0.0,
        }
    }
}

fn objective_gain(
    objective: Objective,
    est: &GainEstimate,
    batch: u32,
    q_current: f64,
    q_min: f64,
) -> f64 {
    match objective {
        Objective::Average => est.gain(batch),
        Objective::MaxMin => (q_min - est.q_wait).max(0.0),
        Objective::PerfectCount => {
            let perfect = |v: f64| v >= 1.0 - PERFECT_EPS;
            if !perfect(q_current) {
                return 0.0;
            }
            (perfect(est.q_serve(batch)) as i64 - perfect(est.q_wait) as i64).max(0) as f64
        }
    }
}

fn current_value(snapshot: &RequestSnapshot, now: f64) -> f64 {
    evaluate_partial(snapshot.timeline, now, snapshot.expected_total)
        .expect("snapshot timelines evaluate cleanly")
        .value
}

/// Raise-the-floor gain: positive only for requests whose projected QoE
/// falls below the worst current QoE among ongoing requests.
pub fn gain_maxmin(
    req: &RequestSnapshot,
    snapshots: &[RequestSnapshot],
    now: f64,
    horizon: f64,
) -> f64 {
    let q_min = snapshots
        .iter()
        .filter(|s| s.state != SnapshotState::Finished)
        .map(|s| current_value(s, now))
        .fold(f64::INFINITY, f64::min);
    let q_wait = evaluate_partial(req.timeline, now + horizon, req.expected_total)
        .expect("snapshot timelines evaluate cleanly")
        .value;
    (q_min - q_wait).max(0.0)
}

/// Keep-it-perfect gain: 1 exactly when a currently perfect request would
/// stay perfect if served but lose perfection if left waiting.
pub fn gain_perfect_count(
    req: &RequestSnapshot,
    now: f64,
    horizon: f64,
    profile: &LatencyProfile,
    batch: u32,
) -> f64 {
    let est = estimate_gain(req, now, horizon, profile, &[batch]);
    objective_gain(
        Objective::PerfectCount,
        &est,
        batch,
        current_value(req, now),
        0.0,
    )
}

struct BatchAttempt {
    outcome: PackOutcome,
    gains: Vec<f64>,
}

/// Packs the best batch over the pruned batch-size range.
///
/// For each probed size the candidates are scored ([`estimate_gain`] at
/// that size), packed by the configured solver, and the outcome with the
/// highest objective wins; ties go to the larger serve set (serving an
/// extra zero-gain request is free capacity). Returns an empty decision
/// when nothing fits.
pub fn solve(
    snapshots: &[RequestSnapshot],
    now: f64,
    profile: &LatencyProfile,
    cfg: &SolverConfig,
) -> Result<ScheduleDecision, DpBudgetExceeded> {
    let candidates: Vec<&RequestSnapshot> = snapshots
        .iter()
        .filter(|s| s.state != SnapshotState::Finished)
        .collect();
    let Some(bounds) = batch_bounds(snapshots, profile) else {
        return Ok(ScheduleDecision::empty());
    };
    let batches: Vec<u32> = (bounds.b_min..=bounds.b_max).collect();
    let estimates: Vec<GainEstimate> = candidates
        .iter()
        .map(|c| estimate_gain(c, now, cfg.horizon, profile, &batches))
        .collect();
    let q_current: Vec<f64> = if matches!(cfg.objective, Objective::Average) {
        Vec::new()
    } else {
        candidates.iter().map(|c| current_value(c, now)).collect()
    };
    let q_min = q_current.iter().copied().fold(f64::INFINITY, f64::min);

    let mut best: Option<BatchAttempt> = None;
    for &batch in &batches {
        let gains: Vec<f64> = candidates
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let qc = q_current.get(i).copied().unwrap_or(0.0);
                objective_gain(cfg.objective, &estimates[i], batch, qc, q_min)
            })
            .collect();
        let items: Vec<PackItem> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| PackItem {
                id: c.id,
                weight: c.context_len,
                gain: gains[i],
                priority: gains[i] / c.context_len.max(1) as f64,
                arrival: c.arrival(),
            })
            .collect();
        let outcome = match cfg.solver {
            SolverKind::Greedy => {
                greedy_pack(&items, batch, profile.kv_capacity, cfg.greedy_skip_unfit)
            }
            SolverKind::Dp => {
                match dp_solve(&items, batch, profile.kv_capacity, cfg.dp_budget)? {
                    Some(outcome) => outcome,
                    None => continue,
                }
            }
        };
        let better = match &best {
            None => true,
            Some(cur) => {
                outcome.objective > cur.outcome.objective + OBJECTIVE_EPS
                    || ((outcome.objective - cur.outcome.objective).abs() <= OBJECTIVE_EPS
                        && outcome.chosen.len() > cur.outcome.chosen.len())
            }
        };
        if better {
            best = Some(BatchAttempt { outcome, gains });
        }
    }
    let Some(attempt) = best else {
        return Ok(ScheduleDecision::empty());
    };

    let serve_set: BTreeSet<RequestId> = attempt.outcome.chosen.iter().copied().collect();
    // chosen is already in descending-priority order; admits inherit it.
    let admit_list: Vec<RequestId> = attempt
        .outcome
        .chosen
        .iter()
        .copied()
        .filter(|id| {
            candidates
                .iter()
                .find(|c| c.id == *id)
                .is_some_and(|c| !c.is_running())
        })
        .collect();
    let mut preempt: Vec<(f64, f64, RequestId)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_running() && !serve_set.contains(&c.id))
        .map(|(i, c)| {
            let prio = attempt.gains[i] / c.context_len.max(1) as f64;
            (prio, c.arrival(), c.id)
        })
        .collect();
    preempt.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("priorities are finite")
            .then(a.1.partial_cmp(&b.1).expect("arrivals are finite"))
            .then(a.2.cmp(&b.2))
    });
    Ok(ScheduleDecision {
        batch_size: serve_set.len() as u32,
        serve_set,
        admit_list,
        preempt_list: preempt.into_iter().map(|(_, _, id)| id).collect(),
        objective_value: attempt.outcome.objective,
    })
}

/// Prunes a decision's admit/preempt pairs by their transition overhead.
///
/// Admissions are walked in descending priority. Each takes the shortest
/// prefix of the preempt list that frees enough KV, and is charged the
/// full engine stall it implies: the preempt costs plus its own resume or
/// prefill cost. The stall's QoE loss, summed over the requests that keep
/// generating through it (running and not preempted), must be beaten by
/// the admission's gain; a harmless (zero-loss) stall is always kept. The
/// first rejection cancels every remaining admission and preemption.
/// Preemptions not consumed by any admission (batch-shape choices by the
/// solver) survive only if no admission was rejected.
pub fn refine(
    decision: &ScheduleDecision,
    snapshots: &[RequestSnapshot],
    now: f64,
    profile: &LatencyProfile,
    cfg: &SolverConfig,
) -> ScheduleDecision {
    if decision.admit_list.is_empty() {
        return decision.clone();
    }
    let by_id: BTreeMap<RequestId, &RequestSnapshot> =
        snapshots.iter().map(|s| (s.id, s)).collect();
    let ongoing: Vec<&RequestSnapshot> = snapshots
        .iter()
        .filter(|s| s.state != SnapshotState::Finished)
        .collect();
    let q_now: Vec<f64> = ongoing.iter().map(|s| current_value(s, now)).collect();
    let q_min = q_now.iter().copied().fold(f64::INFINITY, f64::min);
    let q_now_of: BTreeMap<RequestId, f64> =
        ongoing.iter().zip(&q_now).map(|(s, &q)| (s.id, q)).collect();

    // A stall only delays token generation that would otherwise happen:
    // it is borne by requests staying in the decode batch. Requests that
    // are queued or already evicted wait either way, so charging their
    // decay to the admission would veto harmless admissions whenever the
    // backlog is deep.
    let preempt_set: BTreeSet<RequestId> = decision.preempt_list.iter().copied().collect();
    let stall_bearers: Vec<&RequestSnapshot> = ongoing
        .iter()
        .filter(|s| s.is_running() && !preempt_set.contains(&s.id))
        .copied()
        .collect();

    let running_kv: u64 = snapshots
        .iter()
        .filter(|s| s.is_running())
        .map(|s| s.context_len)
        .sum();
    let mut free = profile.kv_capacity.saturating_sub(running_kv);
    let batch = decision.batch_size.max(1);

    let mut queue: VecDeque<RequestId> = decision.preempt_list.iter().copied().collect();
    let mut kept_admits: Vec<RequestId> = Vec::new();
    let mut kept_preempts: Vec<RequestId> = Vec::new();
    let mut objective = decision.objective_value;
    let mut cancelled = false;

    // The engine freezes the decode batch for the whole transition chain:
    // every victim's copy-out, then each resume back to back. Admissions
    // are therefore charged marginally — each one's victims and resume
    // extend a freeze the earlier admissions already started — and each
    // also pushes back the resume of every admission kept before it.
    let mut frozen_so_far = 0.0_f64;
    let mut kept_resume_delay: Vec<f64> = Vec::new();
    for &admit in &decision.admit_list {
        let snap = by_id[&admit];
        let resume_cost = snap.resume_overhead(profile);
        let mut victims_out = 0.0_f64;
        let mut popped = Vec::new();
        while free < snap.context_len {
            let Some(pid) = queue.pop_front() else { break };
            let p = by_id[&pid];
            let mechanism = profile.select_mechanism(p.context_len);
            victims_out += profile.preemption_overhead(p.context_len, mechanism).0;
            free += p.context_len;
            popped.push(pid);
        }
        if free < snap.context_len {
            cancelled = true;
            objective -= admission_gain(snap, now, profile, cfg, batch, &q_now_of, q_min);
            break;
        }
        let marginal = victims_out + resume_cost;
        let value_at = |s: &RequestSnapshot, t: f64| {
            evaluate_partial(s.timeline, t, s.expected_total)
                .expect("snapshot timelines evaluate cleanly")
                .value
        };
        let mut loss: f64 = stall_bearers
            .iter()
            .map(|r| {
                value_at(r, now + frozen_so_far) - value_at(r, now + frozen_so_far + marginal)
            })
            .sum();
        for (kept, delay) in kept_admits.iter().zip(&kept_resume_delay) {
            let line = by_id[kept];
            loss += value_at(line, now + delay) - value_at(line, now + delay + victims_out);
        }
        let gain = admission_gain(snap, now, profile, cfg, batch, &q_now_of, q_min);
        if loss <= HARMLESS_LOSS || gain > loss {
            free -= snap.context_len;
            for delay in &mut kept_resume_delay {
                *delay += victims_out;
            }
            frozen_so_far += marginal;
            kept_resume_delay.push(frozen_so_far);
            kept_admits.push(admit);
            kept_preempts.extend(popped);
        } else {
            cancelled = true;
            objective -= gain;
            break;
        }
    }
    if !cancelled {
        kept_preempts.extend(queue);
    } else {
        // Cancel everything after the rejection: drop the remaining admits
        // from the objective and restore every unkept preempt to the batch.
        for admit in decision
            .admit_list
            .iter()
            .skip(kept_admits.len() + 1)
        {
            objective -= admission_gain(by_id[admit], now, profile, cfg, batch, &q_now_of, q_min);
        }
    }

    if kept_admits == decision.admit_list && kept_preempts == decision.preempt_list {
        return decision.clone();
    }

    let kept_preempt_set: BTreeSet<RequestId> = kept_preempts.iter().copied().collect();
    let kept_admit_set: BTreeSet<RequestId> = kept_admits.iter().copied().collect();
    let mut serve_set = decision.serve_set.clone();
    for admit in &decision.admit_list {
        if !kept_admit_set.contains(admit) {
            serve_set.remove(admit);
        }
    }
    for preempt in &decision.preempt_list {
        if !kept_preempt_set.contains(preempt) {
            serve_set.insert(*preempt);
            objective += admission_gain(by_id[preempt], now, profile, cfg, batch, &q_now_of, q_min);
        }
    }
    ScheduleDecision {
        batch_size: serve_set.len() as u32,
        serve_set,
        admit_list: kept_admits,
        preempt_list: kept_preempts,
        objective_value: objective,
    }
}

fn admission_gain(
    snap: &RequestSnapshot,
    now: f64,
    profile: &LatencyProfile,
    cfg: &SolverConfig,
    batch: u32,
    q_now_of: &BTreeMap<RequestId, f64>,
    q_min: f64,
) -> f64 {
    let est = estimate_gain(snap, now, cfg.horizon, profile, &[batch]);
    let q_current = q_now_of.get(&snap.id).copied().unwrap_or(0.0);
    objective_gain(cfg.objective, &est, batch, q_current, q_min)
}
