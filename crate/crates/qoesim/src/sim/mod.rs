//! Token-granularity discrete-event serving engine.
//!
//! The engine models one model replica: a decode batch that produces one
//! token per member per iteration (latency from the [`LatencyProfile`]),
//! KV memory that every served context occupies and grows into, prefill
//! before a request's first token, and preemption by swap or recompute.
//! Batch composition is delegated to a policy once per iteration boundary
//! and at idle polls; everything else here is bookkeeping.
//!
//! Determinism is a hard requirement: events are ordered by time with a
//! fixed kind-rank and sequence tiebreak, all collections iterate in key
//! order, and no randomness exists inside the engine. Two runs of the same
//! inputs produce byte-identical reports.

pub mod report;

use crate::latency::{LatencyProfile, PreemptMechanism};
use crate::pacer::{DeliveryChunker, TokenPacer};
use crate::qoe::{evaluate_partial, qoe, QoeParams};
use crate::scheduler::knapsack::DpBudgetExceeded;
use crate::scheduler::policy::{fcfs_policy, lqsf_policy};
use crate::scheduler::{
    estimate_gain, refine, should_trigger, solve, RequestSnapshot, ScheduleDecision,
    SnapshotState, SolverConfig,
};
use report::{build_summary, RequestRow, RequestStatus, SeriesPoint, SimReport};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use thiserror::Error;

/// Batch-composition policy run by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// QoE-aware composition: gain estimation, knapsack packing over a
    /// pruned batch-size range, and transition-overhead refinement.
    Andes,
    /// First-come-first-served with head-of-line blocking.
    Fcfs,
    /// Largest-QoE-gain-first packing without batch-size search or
    /// overhead accounting.
    Lqsf,
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub policy: PolicyKind,
    pub solver: SolverConfig,
    /// Apply the overhead-aware refinement pass after each solve.
    pub refiner_enabled: bool,
    /// Seconds from token generation to client-side delivery.
    pub network_delay: f64,
    /// Tokens delivered per client push; 1 streams every token.
    pub chunk_size: usize,
    /// Time-series sampling interval in seconds.
    pub sample_interval: f64,
    /// How often an idle engine re-polls its queue.
    pub idle_poll: f64,
    /// Stop processing events past this instant; `None` runs to drain.
    pub until: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Andes,
            solver: SolverConfig::default(),
            refiner_enabled: true,
            network_delay: 0.0,
            chunk_size: 1,
            sample_interval: 1.0,
            idle_poll: 0.05,
            until: None,
        }
    }
}

/// One request as fed to the engine. All scheduling inputs are explicit;
/// the workload layer is responsible for filling them in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub id: u64,
    pub arrival: f64,
    pub input_len: u64,
    pub output_len: u64,
    pub params: QoeParams,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    DpBudget(#[from] DpBudgetExceeded),
    #[error("request ids must be unique: {0} appears twice")]
    DuplicateRequestId(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReqState {
    Queued,
    /// Committed to admission; prefill or swap-in is in flight.
    Admitting,
    Running,
    /// Evicted with the swap mechanism; KV is still held until the copy
    /// out completes.
    SwappingOut,
    Preempted(PreemptMechanism),
    Finished,
    Rejected,
}

struct Req {
    spec: RequestSpec,
    state: ReqState,
    generated: u64,
    pacer: TokenPacer,
    chunker: DeliveryChunker,
    /// True while this request's context occupies KV slots.
    holds_kv: bool,
    preempt_times: Vec<f64>,
    resume_times: Vec<f64>,
}

impl Req {
    fn new(spec: RequestSpec, chunk_size: usize) -> Self {
        Self {
            pacer: TokenPacer::new(spec.arrival, spec.params),
            chunker: DeliveryChunker::new(chunk_size),
            spec,
            state: ReqState::Queued,
            generated: 0,
            holds_kv: false,
            preempt_times: Vec::new(),
            resume_times: Vec::new(),
        }
    }

    /// KV tokens this request occupies when admitted: prompt plus
    /// everything generated so far.
    fn context_len(&self) -> u64 {
        self.spec.input_len + self.generated
    }

    fn snapshot_state(&self) -> Option<SnapshotState> {
        match self.state {
            ReqState::Queued => Some(SnapshotState::Queued),
            ReqState::Running => Some(SnapshotState::Running),
            ReqState::Preempted(m) => Some(SnapshotState::Preempted(m)),
            // Transitional states never exist at decision instants;
            // rescheduling is deferred while transitions are in flight.
            ReqState::Admitting | ReqState::SwappingOut => None,
            ReqState::Finished | ReqState::Rejected => None,
        }
    }

    fn is_waiting(&self) -> bool {
        matches!(
            self.state,
            ReqState::Queued
                | ReqState::Admitting
                | ReqState::SwappingOut
                | ReqState::Preempted(_)
        )
    }

    /// In the waiting queue proper: not yet started, or re-queued for a
    /// full recompute after eviction. Swapped-out and mid-transition
    /// requests are in service (on the swapped list), not queued.
    fn is_queued(&self) -> bool {
        matches!(
            self.state,
            ReqState::Queued | ReqState::Preempted(PreemptMechanism::Recompute)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    SwapOutDone,
    AdmitStart,
    ResumeDone,
    IterationDone,
    ScheduleTick,
}

impl EventKind {
    /// Tie rank for simultaneous events. Arrivals land before the
    /// iteration boundary that might admit them; KV releases precede
    /// allocations; the schedule tick runs after everything else so it
    /// sees a settled engine.
    fn rank(self) -> u8 {
        match self {
            EventKind::Arrival => 0,
            EventKind::SwapOutDone => 1,
            EventKind::AdmitStart => 2,
            EventKind::ResumeDone => 3,
            EventKind::IterationDone => 4,
            EventKind::ScheduleTick => 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    id: u64,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.id.cmp(&other.id))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Hard ceiling on processed events; hitting it means a livelock bug, not
/// a big workload.
const EVENT_BUDGET: u64 = 100_000_000;

struct Engine<'p> {
    profile: &'p LatencyProfile,
    cfg: SimConfig,
    clock: f64,
    seq: u64,
    events: BinaryHeap<Reverse<Event>>,
    requests: BTreeMap<u64, Req>,
    running: BTreeSet<u64>,
    kv_used: u64,
    iteration_pending: bool,
    transitions_pending: u32,
    tick_pending: bool,
    /// Batch composition frozen for the in-flight iteration.
    frozen_batch: Vec<u64>,
    series: Vec<SeriesPoint>,
    next_sample: f64,
    peak_queue: usize,
    events_processed: u64,
}

/// Runs the full simulation of `specs` against `profile` under `cfg` and
/// returns the per-request, time-series, and summary report.
pub fn run_simulation(
    specs: &[RequestSpec],
    profile: &LatencyProfile,
    cfg: &SimConfig,
) -> Result<SimReport, SimError> {
    let mut engine = Engine {
        profile,
        cfg: *cfg,
        clock: 0.0,
        seq: 0,
        events: BinaryHeap::new(),
        requests: BTreeMap::new(),
        running: BTreeSet::new(),
        kv_used: 0,
        iteration_pending: false,
        transitions_pending: 0,
        tick_pending: false,
        frozen_batch: Vec::new(),
        series: Vec::new(),
        next_sample: 0.0,
        peak_queue: 0,
        events_processed: 0,
    };
    engine.ingest(specs)?;
    let end_time = engine.run()?;
    Ok(engine.into_report(end_time))
}

impl Engine<'_> {
    fn push_event(&mut self, time: f64, kind: EventKind, id: u64) {
        debug_assert!(time.is_finite(), "event times must be finite");
        let seq = self.seq;
        self.seq += 1;
        self.events.push(Reverse(Event {
            time,
            kind,
            id,
            seq,
        }));
    }

    fn ingest(&mut self, specs: &[RequestSpec]) -> Result<(), SimError> {
        let mut seen = BTreeSet::new();
        for spec in specs {
            if !seen.insert(spec.id) {
                return Err(SimError::DuplicateRequestId(spec.id));
            }
            debug_assert!(spec.input_len >= 1 && spec.output_len >= 1);
            debug_assert!(spec.arrival >= 0.0 && spec.arrival.is_finite());
            self.push_event(spec.arrival, EventKind::Arrival, spec.id);
            // Requests live in the map from ingestion on, but queue counts
            // and scheduling snapshots filter on `arrival <= clock`, so a
            // request is invisible until its arrival event fires.
            self.requests
                .insert(spec.id, Req::new(*spec, self.cfg.chunk_size));
        }
        Ok(())
    }

    fn run(&mut self) -> Result<f64, SimError> {
        while let Some(Reverse(ev)) = self.events.pop() {
            if let Some(until) = self.cfg.until {
                if ev.time > until {
                    self.sample_until(until);
                    return Ok(until);
                }
            }
            self.sample_until(ev.time);
            self.clock = ev.time;
            match ev.kind {
                EventKind::Arrival => self.on_arrival(ev.id)?,
                EventKind::SwapOutDone => self.on_swap_out_done(ev.id),
                EventKind::AdmitStart => self.on_admit_start(ev.id),
                EventKind::ResumeDone => self.on_resume_done(ev.id),
                EventKind::IterationDone => self.on_iteration_done()?,
                EventKind::ScheduleTick => self.on_schedule_tick()?,
            }
            self.note_peak();
            self.check_invariants();
            self.events_processed += 1;
            assert!(
                self.events_processed < EVENT_BUDGET,
                "event budget exhausted at t={}: engine livelock",
                self.clock
            );
        }
        let end = self.clock;
        self.sample_until(end);
        Ok(end)
    }

    fn engine_idle(&self) -> bool {
        !self.iteration_pending && self.transitions_pending == 0
    }

    fn on_arrival(&mut self, id: u64) -> Result<(), SimError> {
        let capacity = self.profile.kv_capacity;
        let req = self.requests.get_mut(&id).expect("arrival of known request");
        // A request whose full context could never fit is refused up
        // front rather than being left to starve.
        if req.spec.input_len + req.spec.output_len > capacity {
            req.state = ReqState::Rejected;
            return Ok(());
        }
        if self.engine_idle() {
            self.tick_pending = true;
            self.push_event(self.clock, EventKind::ScheduleTick, 0);
        }
        Ok(())
    }

    fn on_swap_out_done(&mut self, id: u64) {
        self.transitions_pending -= 1;
        let req = self.requests.get_mut(&id).expect("swap-out of known request");
        debug_assert_eq!(req.state, ReqState::SwappingOut);
        req.state = ReqState::Preempted(PreemptMechanism::Swap);
        req.holds_kv = false;
        self.kv_used -= req.context_len();
        if self.engine_idle() && !self.tick_pending {
            self.tick_pending = true;
            self.push_event(self.clock, EventKind::ScheduleTick, 0);
        }
    }

    fn on_admit_start(&mut self, id: u64) {
        let capacity = self.profile.kv_capacity;
        let req = self.requests.get_mut(&id).expect("admit of known request");
        debug_assert_eq!(req.state, ReqState::Admitting);
        debug_assert!(!req.holds_kv);
        req.holds_kv = true;
        self.kv_used += req.context_len();
        assert!(
            self.kv_used <= capacity,
            "admission overflowed KV at t={}",
            self.clock
        );
    }

    fn on_resume_done(&mut self, id: u64) {
        self.transitions_pending -= 1;
        let clock = self.clock;
        let req = self.requests.get_mut(&id).expect("resume of known request");
        debug_assert_eq!(req.state, ReqState::Admitting);
        req.state = ReqState::Running;
        req.resume_times.push(clock);
        self.running.insert(id);
    }

    fn on_iteration_done(&mut self) -> Result<(), SimError> {
        self.iteration_pending = false;
        let batch = std::mem::take(&mut self.frozen_batch);
        let delivery_at = self.clock + self.cfg.network_delay;
        for id in batch {
            let req = self.requests.get_mut(&id).expect("batch member exists");
            if req.state != ReqState::Running {
                // Finished earlier in this same loop is impossible (one
                // token per member per iteration); nothing else can touch
                // a frozen batch mid-iteration.
                debug_assert_eq!(req.state, ReqState::Finished);
                continue;
            }
            req.generated += 1;
            self.kv_used += 1;
            assert!(
                self.kv_used <= self.profile.kv_capacity,
                "decode growth overflowed KV at t={}; headroom guard failed",
                self.clock
            );
            let ready = req.chunker.on_token();
            if ready > 0 {
                req.pacer
                    .push(ready, delivery_at)
                    .expect("deliveries advance with the clock");
            }
            if req.generated == req.spec.output_len {
                let rest = req.chunker.flush();
                if rest > 0 {
                    req.pacer
                        .push(rest, delivery_at)
                        .expect("deliveries advance with the clock");
                }
                req.pacer.flush_on_finish(delivery_at);
                req.state = ReqState::Finished;
                req.holds_kv = false;
                self.kv_used -= req.context_len();
                self.running.remove(&id);
            }
        }
        self.reschedule()
    }

    fn on_schedule_tick(&mut self) -> Result<(), SimError> {
        self.tick_pending = false;
        if !self.engine_idle() {
            return Ok(());
        }
        self.reschedule()
    }

    /// Builds snapshots, asks the configured policy for a decision, and
    /// applies it. Runs at every iteration boundary and at idle ticks.
    fn reschedule(&mut self) -> Result<(), SimError> {
        debug_assert!(self.engine_idle());
        let decision = {
            let arrived = |req: &&Req| req.spec.arrival <= self.clock;
            let snaps: Vec<RequestSnapshot> = self
                .requests
                .values()
                .filter(arrived)
                .filter_map(|r| {
                    r.snapshot_state().map(|state| RequestSnapshot {
                        id: r.spec.id,
                        timeline: r.pacer.timeline(),
                        state,
                        context_len: r.context_len(),
                        generated: r.generated,
                        expected_total: r.spec.output_len,
                    })
                })
                .collect();
            let capacity = self.profile.kv_capacity;
            match self.cfg.policy {
                PolicyKind::Fcfs => fcfs_policy(&snaps, capacity),
                PolicyKind::Lqsf => {
                    let batch = (self.running.len() as u32).max(1);
                    let gains: Vec<(u64, f64)> = snaps
                        .iter()
                        .map(|s| {
                            let est = estimate_gain(
                                s,
                                self.clock,
                                self.cfg.solver.horizon,
                                self.profile,
                                &[batch],
                            );
                            (s.id, est.gain(batch))
                        })
                        .collect();
                    lqsf_policy(&snaps, &gains, capacity)
                }
                PolicyKind::Andes => {
                    let occupancy = self.kv_used as f64 / capacity as f64;
                    let current_latency = if self.running.is_empty() {
                        0.0
                    } else {
                        self.profile.decode_latency(self.running.len() as u32)
                    };
                    if should_trigger(occupancy, current_latency, &snaps, self.cfg.solver.watermark)
                    {
                        let decision = solve(&snaps, self.clock, self.profile, &self.cfg.solver)?;
                        if self.cfg.refiner_enabled {
                            refine(&decision, &snaps, self.clock, self.profile, &self.cfg.solver)
                        } else {
                            decision
                        }
                    } else {
                        // Off-trigger: cheap spare-capacity admission in
                        // arrival order, never disturbing the batch.
                        fcfs_policy(&snaps, capacity)
                    }
                }
            }
        };
        self.apply_decision(decision);
        Ok(())
    }

    /// Largest-context victim (ties: newer arrival, then larger id) for
    /// QoE-aware policies; newest arrival for FCFS.
    fn pick_victim(&self, candidates: &BTreeSet<u64>) -> Option<u64> {
        let running: Vec<&Req> = candidates
            .iter()
            .filter_map(|id| self.requests.get(id))
            .filter(|r| r.state == ReqState::Running)
            .collect();
        let victim = match self.cfg.policy {
            PolicyKind::Fcfs => running.into_iter().max_by(|a, b| {
                a.spec
                    .arrival
                    .total_cmp(&b.spec.arrival)
                    .then(a.spec.id.cmp(&b.spec.id))
            }),
            PolicyKind::Andes | PolicyKind::Lqsf => running.into_iter().max_by(|a, b| {
                a.context_len()
                    .cmp(&b.context_len())
                    .then(a.spec.arrival.total_cmp(&b.spec.arrival))
                    .then(a.spec.id.cmp(&b.spec.id))
            }),
        };
        victim.map(|r| r.spec.id)
    }

    fn apply_decision(&mut self, mut decision: ScheduleDecision) {
        // Headroom guard: the iteration about to run grows every served
        // context by one token; trim the decision until that fits. Pending
        // admissions go first (cheapest to cancel), then running victims.
        loop {
            let members = decision.serve_set.len() as u64;
            let total: u64 = decision
                .serve_set
                .iter()
                .map(|id| self.requests[id].context_len())
                .sum();
            if total + members <= self.profile.kv_capacity {
                break;
            }
            if let Some(last_admit) = decision.admit_list.pop() {
                decision.serve_set.remove(&last_admit);
                continue;
            }
            let Some(victim) = self.pick_victim(&decision.serve_set) else {
                break;
            };
            decision.serve_set.remove(&victim);
            decision.preempt_list.push(victim);
        }

        let mut stall = 0.0;
        for &pid in &decision.preempt_list {
            let clock = self.clock;
            let fcfs = self.cfg.policy == PolicyKind::Fcfs;
            let mechanism = if fcfs {
                PreemptMechanism::Recompute
            } else {
                self.profile.select_mechanism(self.requests[&pid].context_len())
            };
            let (out_cost, _) = self
                .profile
                .preemption_overhead(self.requests[&pid].context_len(), mechanism);
            let req = self.requests.get_mut(&pid).expect("preempt of known request");
            debug_assert_eq!(req.state, ReqState::Running, "only running requests preempt");
            req.preempt_times.push(clock);
            self.running.remove(&pid);
            match mechanism {
                PreemptMechanism::Recompute => {
                    req.state = ReqState::Preempted(PreemptMechanism::Recompute);
                    req.holds_kv = false;
                    self.kv_used -= req.context_len();
                }
                PreemptMechanism::Swap => {
                    req.state = ReqState::SwappingOut;
                    stall += out_cost;
                    self.transitions_pending += 1;
                    self.push_event(clock + stall, EventKind::SwapOutDone, pid);
                }
            }
        }

        for &aid in &decision.admit_list {
            let clock = self.clock;
            let req = self.requests.get_mut(&aid).expect("admit of known request");
            let resume_cost = match req.state {
                ReqState::Queued => self.profile.prefill_latency(req.context_len()),
                ReqState::Preempted(m) => {
                    self.profile.preemption_overhead(req.context_len(), m).1
                }
                other => unreachable!("admitting a request in state {other:?}"),
            };
            req.state = ReqState::Admitting;
            // AdmitStart is instantaneous bookkeeping (the KV allocation
            // instant); only the resume completion keeps the engine busy.
            self.transitions_pending += 1;
            self.push_event(clock + stall, EventKind::AdmitStart, aid);
            stall += resume_cost;
            self.push_event(clock + stall, EventKind::ResumeDone, aid);
        }

        if !decision.serve_set.is_empty() {
            self.frozen_batch = decision.serve_set.iter().copied().collect();
            let tau = self.profile.decode_latency(decision.serve_set.len() as u32);
            self.iteration_pending = true;
            self.push_event(self.clock + stall + tau, EventKind::IterationDone, 0);
        } else if self.transitions_pending == 0 {
            let waiting = self
                .requests
                .values()
                .any(|r| r.spec.arrival <= self.clock && r.is_waiting());
            if waiting && !self.tick_pending {
                self.tick_pending = true;
                self.push_event(self.clock + self.cfg.idle_poll, EventKind::ScheduleTick, 0);
            }
        }
    }

    fn queue_len(&self) -> usize {
        self.requests
            .values()
            .filter(|r| r.spec.arrival <= self.clock && r.is_queued())
            .count()
    }

    fn note_peak(&mut self) {
        self.peak_queue = self.peak_queue.max(self.queue_len());
    }

    fn sample_until(&mut self, t: f64) {
        while self.next_sample <= t {
            self.series.push(SeriesPoint {
                time: self.next_sample,
                queue_len: self.queue_len(),
                running: self.running.len(),
                kv_frac: self.kv_used as f64 / self.profile.kv_capacity as f64,
            });
            self.next_sample += self.cfg.sample_interval;
        }
    }

    fn check_invariants(&self) {
        assert!(
            self.kv_used <= self.profile.kv_capacity,
            "KV overcommitted at t={}: {} > {}",
            self.clock,
            self.kv_used,
            self.profile.kv_capacity
        );
        debug_assert_eq!(
            self.kv_used,
            self.requests
                .values()
                .filter(|r| r.holds_kv)
                .map(|r| r.context_len())
                .sum::<u64>(),
            "KV ledger out of sync at t={}",
            self.clock
        );
        debug_assert!(self
            .running
            .iter()
            .all(|id| self.requests[id].state == ReqState::Running));
    }

    fn into_report(self, end_time: f64) -> SimReport {
        let mut rows = Vec::with_capacity(self.requests.len());
        for req in self.requests.values() {
            // Requests that never arrived within the simulated window are
            // not part of the report.
            if req.spec.arrival > end_time {
                continue;
            }
            let timeline = req.pacer.timeline();
            let deliveries = timeline.deliveries();
            let ttft = deliveries.first().map(|d| d - req.spec.arrival);
            let avg_tds = match deliveries.len() {
                0 | 1 => 0.0,
                n => {
                    let span = deliveries[n - 1] - deliveries[0];
                    if span > 0.0 {
                        (n - 1) as f64 / span
                    } else {
                        0.0
                    }
                }
            };
            let (status, score) = match req.state {
                ReqState::Rejected => (RequestStatus::Rejected, 0.0),
                ReqState::Finished => (
                    RequestStatus::Finished,
                    qoe(timeline).expect("finished requests have full timelines").value,
                ),
                _ => (
                    RequestStatus::Unfinished,
                    evaluate_partial(
                        timeline,
                        end_time.max(req.spec.arrival),
                        req.spec.output_len,
                    )
                    .expect("in-flight requests evaluate cleanly")
                    .value,
                ),
            };
            rows.push(RequestRow {
                id: req.spec.id,
                arrival: req.spec.arrival,
                ttft,
                qoe: score,
                avg_tds,
                preemptions: req.preempt_times.len() as u32,
                status,
                preempt_times: req.preempt_times.clone(),
                resume_times: req.resume_times.clone(),
            });
        }
        let summary = build_summary(&rows, self.peak_queue);
        SimReport {
            rows,
            series: self.series,
            summary,
        }
    }
}
