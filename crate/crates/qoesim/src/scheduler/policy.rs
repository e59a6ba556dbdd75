//! Baseline batch-composition policies.
//!
//! Both baselines produce the same [`ScheduleDecision`] shape as the
//! QoE-aware solver so the engine applies them identically.

use super::{knapsack, RequestId, RequestSnapshot, ScheduleDecision, SnapshotState};
use std::collections::BTreeSet;

/// Gains below this are treated as zero by the gain-sorted baseline.
const GAIN_EPS: f64 = 1e-12;

/// First-come-first-served composition.
///
/// The running set is kept in arrival order. If it no longer fits in KV
/// capacity (contexts grow every iteration), the newest-arrived running
/// requests are evicted until it does. Waiting requests are then admitted
/// strictly in arrival order, stopping at the first that does not fit:
/// head-of-line blocking is part of the policy.
pub fn fcfs_policy(snapshots: &[RequestSnapshot], kv_capacity: u64) -> ScheduleDecision {
    let mut running: Vec<&RequestSnapshot> = snapshots
        .iter()
        .filter(|s| s.is_running())
        .collect();
    running.sort_by(|a, b| {
        a.arrival()
            .partial_cmp(&b.arrival())
            .expect("arrivals are finite")
            .then(a.id.cmp(&b.id))
    });
    let mut waiting: Vec<&RequestSnapshot> = snapshots
        .iter()
        .filter(|s| matches!(s.state, SnapshotState::Queued | SnapshotState::Preempted(_)))
        .collect();
    waiting.sort_by(|a, b| {
        a.arrival()
            .partial_cmp(&b.arrival())
            .expect("arrivals are finite")
            .then(a.id.cmp(&b.id))
    });

    let mut used: u64 = running.iter().map(|s| s.context_len).sum();
    let mut preempt_list = Vec::new();
    while used > kv_capacity {
        let victim = running.pop().expect("nonzero usage implies a running request");
        used -= victim.context_len;
        preempt_list.push(victim.id);
    }

    let mut serve_set: BTreeSet<RequestId> = running.iter().map(|s| s.id).collect();
    let mut admit_list = Vec::new();
    for w in waiting {
        if used + w.context_len <= kv_capacity {
            used += w.context_len;
            serve_set.insert(w.id);
            admit_list.push(w.id);
        } else {
            break;
        }
    }
    ScheduleDecision {
        batch_size: serve_set.len() as u32,
        serve_set,
        admit_list,
        preempt_list,
        objective_value: 0.0,
    }
}

/// Gain-sorted composition without batch-size search.
///
/// Requests are packed in descending gain order (the request losing the
/// most QoE first) until memory binds, with no cap on batch size and no
/// transition-overhead accounting. When every gain is negligible the
/// current batch is left untouched - there is nothing worth disturbing.
pub fn lqsf_policy(
    snapshots: &[RequestSnapshot],
    gains: &[(RequestId, f64)],
    kv_capacity: u64,
) -> ScheduleDecision {
    let candidates: Vec<&RequestSnapshot> = snapshots
        .iter()
        .filter(|s| s.state != SnapshotState::Finished)
        .collect();
    let gain_of = |id: RequestId| -> f64 {
        gains
            .iter()
            .find(|(gid, _)| *gid == id)
            .map(|(_, g)| *g)
            .unwrap_or(0.0)
    };

    if candidates.iter().all(|c| gain_of(c.id) <= GAIN_EPS) {
        let serve_set: BTreeSet<RequestId> = candidates
            .iter()
            .filter(|c| c.is_running())
            .map(|c| c.id)
            .collect();
        if !serve_set.is_empty() {
            return ScheduleDecision {
                batch_size: serve_set.len() as u32,
                serve_set,
                admit_list: Vec::new(),
                preempt_list: Vec::new(),
                objective_value: 0.0,
            };
        }
        // An idle engine with waiting work must still make progress even
        // when no gain clears the threshold (e.g. requests so starved
        // their projected improvement rounds to zero). Fall back to
        // arrival order rather than sleeping forever.
        return fcfs_policy(snapshots, kv_capacity);
    }

    let items: Vec<knapsack::PackItem> = candidates
        .iter()
        .map(|c| knapsack::PackItem {
            id: c.id,
            weight: c.context_len,
            gain: gain_of(c.id),
            // Raw gain, not gain per token: the baseline ignores size.
            priority: gain_of(c.id),
            arrival: c.arrival(),
        })
        .collect();
    let outcome = knapsack::greedy_pack(&items, candidates.len() as u32, kv_capacity, false);
    let serve_set: BTreeSet<RequestId> = outcome.chosen.iter().copied().collect();
    let admit_list: Vec<RequestId> = outcome
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
        .filter(|c| c.is_running() && !serve_set.contains(&c.id))
        .map(|c| (gain_of(c.id), c.arrival(), c.id))
        .collect();
    preempt.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("gains are finite")
            .then(a.1.partial_cmp(&b.1).expect("arrivals are finite"))
            .then(a.2.cmp(&b.2))
    });
    ScheduleDecision {
        batch_size: serve_set.len() as u32,
        serve_set,
        admit_list,
        preempt_list: preempt.into_iter().map(|(_, _, id)| id).collect(),
        objective_value: outcome.objective,
    }
}
