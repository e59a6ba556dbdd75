//! Acceptance gate for the simulator.
//!
//! Each test prints one `PASS`/`FAIL` summary line (visible with
//! `cargo test --test acceptance -- --nocapture`) and enforces its criterion
//! with assertions:
//!
//! 1.  the metric matches an independent brute-force implementation and its
//!     limit cases are exact,
//! 2.  the DP batch solver matches exhaustive subset enumeration,
//! 3.  greedy packing is feasible, never beats the DP optimum, and holds up
//!     end to end,
//! 4.  the overhead refiner prunes exactly the admissions whose stall costs
//!     more QoE than they add,
//! 5.  paced client-side release scores identically to the batch
//!     consumption recurrence,
//! 6.  under cyclic bursts the QoE-aware policy beats the gain-sorted
//!     baseline, which beats FCFS, by a clear margin,
//! 7.  the QoE-aware policy at most halves the FCFS peak waiting queue,
//! 8.  disabling the refiner multiplies preemption churn and strictly
//!     lowers average QoE,
//! 9.  identical config and seed reproduce byte-identical per-request CSV,
//! 10. TTFT defaults and cyclic-burst rate algebra are exact.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use qoesim::latency::DecodePoint;
use qoesim::qoe::ideal_timeline;
use qoesim::scheduler::knapsack::{dp_solve, greedy_pack, PackItem};
use qoesim::{
    default_ttft_target, qoe, refine, run_experiment, ArrivalConfig, BurstSpec, ExperimentConfig,
    LatencyProfile, LenDist, PolicyKind, QoeParams, RequestSnapshot, ScheduleDecision,
    SnapshotState, SolverConfig, SolverKind, TokenPacer, TokenTimeline, TraceGenerator,
    WorkloadPreset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(ttft: f64, speed: f64) -> QoeParams {
    QoeParams::new(ttft, speed).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Metric exactness against a brute-force reference.
// ---------------------------------------------------------------------------

/// Definitional reference: ideal instants by direct multiplication,
/// consumption by the late-token cascade, score from the two delay sums.
fn brute_force_qoe(arrival: f64, p: QoeParams, deliveries: &[f64]) -> f64 {
    let n = deliveries.len();
    let gap = 1.0 / p.consumption_speed;
    let ideal: Vec<f64> = (0..n)
        .map(|i| arrival + p.ttft_target + i as f64 * gap)
        .collect();
    let mut consumed = vec![0.0_f64; n];
    for i in 0..n {
        let floor = if i == 0 { ideal[0] } else { consumed[i - 1] + gap };
        consumed[i] = deliveries[i].max(floor);
    }
    let last = consumed[n - 1];
    let (mut s_delay, mut s_whole) = (0.0, 0.0);
    for i in 0..n {
        s_delay += consumed[i] - ideal[i];
        s_whole += last - ideal[i];
    }
    if s_whole <= 0.0 {
        1.0
    } else {
        (1.0 - s_delay / s_whole).clamp(0.0, 1.0)
    }
}

#[test]
fn c01_metric_matches_brute_force_and_limit_cases() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_err = 0.0_f64;
    for _ in 0..1000 {
        let p = params(rng.gen_range(0.1..5.0), rng.gen_range(0.5..20.0));
        let arrival = rng.gen_range(0.0..10.0);
        let n = rng.gen_range(1..=50);
        let mut t = arrival + rng.gen_range(0.0..2.0 * p.ttft_target);
        let mut deliveries = Vec::with_capacity(n);
        for _ in 0..n {
            deliveries.push(t);
            // Mix of smooth generation, bursts (zero gap), and long stalls.
            let step = match rng.gen_range(0..10) {
                0..=5 => rng.gen_range(0.0..2.0 / p.consumption_speed),
                6..=8 => 0.0,
                _ => rng.gen_range(1.0..10.0),
            };
            t += step;
        }
        let timeline = TokenTimeline::with_deliveries(arrival, p, deliveries.clone()).unwrap();
        let got = qoe(&timeline).unwrap().value;
        let want = brute_force_qoe(arrival, p, &deliveries);
        max_err = max_err.max((got - want).abs());
    }
    assert!(
        max_err <= 1e-9,
        "metric deviates from brute force by {max_err:e}"
    );

    // Perfect delivery scores exactly 1, with no tolerance.
    for (ttft, speed, n) in [(1.0, 4.8, 1usize), (0.4, 3.3, 17), (2.5, 12.0, 50)] {
        let p = params(ttft, speed);
        let deliveries = ideal_timeline(3.0, &p, n);
        let timeline = TokenTimeline::with_deliveries(3.0, p, deliveries).unwrap();
        assert_eq!(qoe(&timeline).unwrap().value, 1.0);
    }

    // Nothing delivered long past the deadline scores exactly 0.
    let p = params(1.0, 4.0);
    let empty = TokenTimeline::new(0.0, p);
    let score = qoesim::evaluate_partial(&empty, 500.0, 30).unwrap();
    assert_eq!(score.value, 0.0);

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "metric check took {elapsed:?}"
    );
    println!(
        "PASS c01 metric vs brute force: max |err| {max_err:.2e} over 1000 timelines, \
         limits exact, {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 2 + 3. Batch solvers against exhaustive enumeration.
// ---------------------------------------------------------------------------

struct PackInstance {
    items: Vec<PackItem>,
    capacity: u64,
}

fn pack_instances() -> &'static Vec<PackInstance> {
    static INSTANCES: OnceLock<Vec<PackInstance>> = OnceLock::new();
    INSTANCES.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        (0..500)
            .map(|_| {
                let n = rng.gen_range(1..=10);
                let capacity = rng.gen_range(1..=30u64);
                let items = (0..n)
                    .map(|i| {
                        // Weights may exceed the capacity so that unfit
                        // items and infeasible batch sizes both occur.
                        let weight = rng.gen_range(1..=capacity + 5);
                        let gain = rng.gen_range(0.0..1.0);
                        PackItem {
                            id: i as u64,
                            weight,
                            gain,
                            priority: gain / weight as f64,
                            arrival: rng.gen_range(0.0..100.0),
                        }
                    })
                    .collect();
                PackInstance { items, capacity }
            })
            .collect()
    })
}

/// Best total gain over subsets of exactly `size` items within `capacity`,
/// summing gains in ascending item order (the same order the DP adds them).
fn exhaustive_best(items: &[PackItem], size: usize, capacity: u64) -> Option<f64> {
    let n = items.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let mut weight = 0u64;
        let mut gain = 0.0;
        for (i, item) in items.iter().enumerate() {
            if mask >> i & 1 == 1 {
                weight += item.weight;
                gain += item.gain;
            }
        }
        if weight <= capacity && best.map_or(true, |b| gain > b) {
            best = Some(gain);
        }
    }
    best
}

#[test]
fn c02_dp_solver_matches_exhaustive_enumeration() {
    let started = Instant::now();
    let mut compared = 0usize;
    for inst in pack_instances() {
        for size in 1..=inst.items.len() {
            let want = exhaustive_best(&inst.items, size, inst.capacity);
            let got = dp_solve(&inst.items, size as u32, inst.capacity, 1_000_000)
                .expect("table fits the budget at this scale");
            match (got, want) {
                (None, None) => {}
                (Some(outcome), Some(best)) => {
                    assert_eq!(
                        outcome.objective, best,
                        "dp {} vs exhaustive {} (n={}, size={}, cap={})",
                        outcome.objective,
                        best,
                        inst.items.len(),
                        size,
                        inst.capacity
                    );
                    assert_eq!(outcome.chosen.len(), size);
                }
                (got, want) => panic!(
                    "feasibility disagreement at size {size}: dp {got:?} vs exhaustive {want:?}"
                ),
            }
            compared += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(30),
        "dp oracle took {elapsed:?}"
    );
    println!(
        "PASS c02 dp vs exhaustive: {compared} (instance, batch-size) cells value-exact, \
         {elapsed:?}"
    );
}

#[test]
fn c03_greedy_packing_quality_and_end_to_end_parity() {
    // Part 1: on the DP oracle instances, greedy must be feasible and never
    // above the optimum; its average quality is reported as a diagnostic.
    let mut ratios = Vec::new();
    for inst in pack_instances() {
        for size in 1..=inst.items.len() {
            let Some(best) = (1..=size)
                .filter_map(|b| {
                    dp_solve(&inst.items, b as u32, inst.capacity, 1_000_000)
                        .unwrap()
                        .map(|o| o.objective)
                })
                .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))))
            else {
                continue;
            };
            let greedy = greedy_pack(&inst.items, size as u32, inst.capacity, false);
            let mut weight = 0u64;
            let mut seen = BTreeSet::new();
            for &id in &greedy.chosen {
                let item = inst.items.iter().find(|i| i.id == id).unwrap();
                weight += item.weight;
                assert!(seen.insert(id), "greedy chose {id} twice");
            }
            assert!(weight <= inst.capacity, "greedy batch over capacity");
            assert!(greedy.chosen.len() <= size, "greedy batch over size");
            assert!(
                greedy.objective <= best + 1e-9,
                "greedy {} beats the optimum {}",
                greedy.objective,
                best
            );
            if best > 0.0 {
                ratios.push(greedy.objective / best);
            }
        }
    }
    let avg_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;

    // Part 2: swapping the greedy packer for the exact DP in a small
    // end-to-end sweep moves average QoE by at most 0.02.
    let mut diffs = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut greedy_cfg = small_sweep_config(seed);
        greedy_cfg.policy.solver = SolverKind::Greedy;
        let mut dp_cfg = small_sweep_config(seed);
        dp_cfg.policy.solver = SolverKind::Dp;
        let greedy_qoe = run_experiment(&greedy_cfg).unwrap().summary.avg_qoe;
        let dp_qoe = run_experiment(&dp_cfg).unwrap().summary.avg_qoe;
        diffs.push((seed, greedy_qoe, dp_qoe));
    }
    let mean_gap = diffs
        .iter()
        .map(|(_, g, d)| g - d)
        .sum::<f64>()
        / diffs.len() as f64;
    for (seed, greedy_qoe, dp_qoe) in &diffs {
        println!("  c03 seed {seed}: greedy {greedy_qoe:.4} dp {dp_qoe:.4}");
    }
    assert!(
        mean_gap >= -0.02,
        "greedy trails dp end to end by {:.4} on average",
        -mean_gap
    );
    println!(
        "PASS c03 greedy quality: avg objective ratio {avg_ratio:.3} (diagnostic, \
         {} cells), end-to-end avg gap greedy-dp {mean_gap:+.4} >= -0.02",
        ratios.len()
    );
}

/// Small-context workload against a small KV so that the DP table stays
/// within budget at every decision, loaded hard enough that the batch
/// composition actually matters (average QoE well below 1).
fn small_sweep_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.workload.seed = seed;
    cfg.workload.input_dist = Some(LenDist::new(400.0, 150.0, 800).unwrap());
    cfg.workload.output_dist = Some(LenDist::new(100.0, 60.0, 300).unwrap());
    cfg.workload.arrival = ArrivalConfig::Burst {
        mean_rate_rps: 2.0,
        intensity: 2.0,
        duration_frac: 0.35,
        cycle_len_s: 120.0,
        duration_s: 240.0,
    };
    cfg.profile.kv_capacity = 4_000;
    cfg
}

// ---------------------------------------------------------------------------
// 4. The overhead refiner on a hand-built contended scenario.
// ---------------------------------------------------------------------------

fn scenario_profile(prefill_throughput: f64, swap_bandwidth: f64) -> LatencyProfile {
    LatencyProfile::new(
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
        prefill_throughput,
        swap_bandwidth,
        900,
    )
    .unwrap()
}

#[test]
fn c04_refiner_prunes_low_value_admissions_exactly() {
    let started = Instant::now();
    // Ten requests, ids 1..=10. 1-3 run with deep buffers (easy victims),
    // 4-7 run exactly on pace (any stall costs them), 8-10 wait. 9 and 10
    // are overdue; 8 has a far-future deadline, so admitting it gains
    // nothing while its stall still hurts the on-pace four.
    let p = params(1.0, 5.0);
    let now = 4.0;
    let ahead: Vec<TokenTimeline> = (0..3)
        .map(|_| {
            // 40 tokens delivered instantly at arrival: far ahead of pace.
            TokenTimeline::with_deliveries(0.0, p, vec![0.0; 40]).unwrap()
        })
        .collect();
    // 16 tokens at ttft 1.0 and 5 tokens/s: the 16th lands exactly at
    // `now` = 4.0, so any stall immediately delays the reader.
    let on_pace: Vec<TokenTimeline> = (0..4)
        .map(|_| {
            let deliveries = ideal_timeline(0.0, &p, 16);
            TokenTimeline::with_deliveries(0.0, p, deliveries).unwrap()
        })
        .collect();
    let overdue = TokenTimeline::new(0.0, p);
    let relaxed = TokenTimeline::new(0.0, params(200.0, 5.0));

    let mut snaps: Vec<RequestSnapshot> = Vec::new();
    for (i, line) in ahead.iter().enumerate() {
        snaps.push(RequestSnapshot {
            id: i as u64 + 1,
            timeline: line,
            state: SnapshotState::Running,
            context_len: 120,
            generated: 40,
            expected_total: 200,
        });
    }
    for (i, line) in on_pace.iter().enumerate() {
        snaps.push(RequestSnapshot {
            id: i as u64 + 4,
            timeline: line,
            state: SnapshotState::Running,
            context_len: 120,
            generated: 16,
            expected_total: 200,
        });
    }
    snaps.push(RequestSnapshot {
        id: 8,
        timeline: &relaxed,
        state: SnapshotState::Queued,
        context_len: 140,
        generated: 0,
        expected_total: 100,
    });
    for id in [9u64, 10] {
        snaps.push(RequestSnapshot {
            id,
            timeline: &overdue,
            state: SnapshotState::Queued,
            context_len: 100,
            generated: 0,
            expected_total: 100,
        });
    }

    // The upstream decision wants all three waiters in, sacrificing the
    // three buffered runners.
    let serve_set: BTreeSet<u64> = (4..=10).collect();
    let decision = ScheduleDecision {
        serve_set,
        batch_size: 7,
        admit_list: vec![10, 9, 8],
        preempt_list: vec![1, 2, 3],
        objective_value: 1.0,
    };

    let profile = scenario_profile(500.0, 2_000.0);
    let refined = refine(&decision, &snaps, now, &profile, &SolverConfig::default());
    assert_eq!(refined.admit_list, vec![10, 9], "admits");
    assert_eq!(refined.preempt_list, vec![1, 2], "preempts");
    assert!(
        refined.serve_set.contains(&3),
        "the unused victim stays in the batch"
    );
    assert!(!refined.serve_set.contains(&8));

    // With free transitions the refiner is an identity transform.
    let free = scenario_profile(1e18, 1e18);
    let unchanged = refine(&decision, &snaps, now, &free, &SolverConfig::default());
    assert_eq!(unchanged, decision);

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "refiner took {elapsed:?}");
    println!(
        "PASS c04 refiner scenario: admits [10, 9], preempts [1, 2], zero-overhead \
         identity, {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 5. Pacer equivalence with the batch recurrence.
// ---------------------------------------------------------------------------

#[test]
fn c05_paced_release_scores_identically_to_the_batch_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut max_err = 0.0_f64;
    for _ in 0..1000 {
        let p = params(rng.gen_range(0.1..4.0), rng.gen_range(0.5..16.0));
        let arrival = rng.gen_range(0.0..5.0);
        let mut pacer = TokenPacer::new(arrival, p);
        let mut t = arrival + rng.gen_range(0.0..2.0);
        let mut total = 0usize;
        while total < 50 {
            let chunk = rng.gen_range(1..=6).min(50 - total);
            pacer.push(chunk, t).unwrap();
            total += chunk;
            if rng.gen_bool(0.7) {
                t += rng.gen_range(0.0..1.5 / p.consumption_speed);
            } else {
                t += rng.gen_range(0.5..6.0);
            }
            if rng.gen_bool(0.1) {
                break;
            }
        }
        // Score the paced release instants directly...
        let released =
            TokenTimeline::with_deliveries(arrival, p, pacer.release_times().to_vec()).unwrap();
        let from_pacer = qoe(&released).unwrap().value;
        // ...and the raw deliveries through the batch recurrence.
        let raw = pacer.timeline();
        let from_raw = qoe(raw).unwrap().value;
        max_err = max_err.max((from_pacer - from_raw).abs());
    }
    assert!(
        max_err <= 1e-9,
        "pacer release scoring deviates by {max_err:e}"
    );
    println!("PASS c05 pacer equivalence: max |err| {max_err:.2e} over 1000 schedules");
}

// ---------------------------------------------------------------------------
// 6 + 7. End-to-end policy comparison under cyclic bursts.
// ---------------------------------------------------------------------------

const SWEEP_SEEDS: [u64; 3] = [1, 3, 5];

struct SweepRun {
    seed: u64,
    policy: PolicyKind,
    avg_qoe: f64,
    peak_queue: usize,
    total_requests: usize,
    wall: Duration,
}

fn burst_config(policy: PolicyKind, seed: u64, duration_frac: f64, refiner: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.workload.seed = seed;
    cfg.workload.arrival = ArrivalConfig::Burst {
        mean_rate_rps: 0.70,
        intensity: 2.0,
        duration_frac,
        cycle_len_s: 450.0,
        duration_s: 720.0,
    };
    cfg.policy.policy = policy;
    cfg.policy.refiner = refiner;
    cfg
}

fn burst_sweep() -> &'static Vec<SweepRun> {
    static SWEEP: OnceLock<Vec<SweepRun>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let mut runs = Vec::new();
        for &seed in &SWEEP_SEEDS {
            for policy in [PolicyKind::Andes, PolicyKind::Lqsf, PolicyKind::Fcfs] {
                let cfg = burst_config(policy, seed, 0.35, true);
                let started = Instant::now();
                let report = run_experiment(&cfg).unwrap();
                runs.push(SweepRun {
                    seed,
                    policy,
                    avg_qoe: report.summary.avg_qoe,
                    peak_queue: report.summary.peak_queue,
                    total_requests: report.summary.total_requests,
                    wall: started.elapsed(),
                });
            }
        }
        runs
    })
}

fn sweep_run(seed: u64, policy: PolicyKind) -> &'static SweepRun {
    burst_sweep()
        .iter()
        .find(|r| r.seed == seed && r.policy == policy)
        .unwrap()
}

#[test]
fn c06_qoe_policy_ordering_under_cyclic_bursts() {
    for &seed in &SWEEP_SEEDS {
        let andes = sweep_run(seed, PolicyKind::Andes);
        let lqsf = sweep_run(seed, PolicyKind::Lqsf);
        let fcfs = sweep_run(seed, PolicyKind::Fcfs);
        println!(
            "  c06 seed {seed}: andes {:.4} > lqsf {:.4} > fcfs {:.4} \
             ({} requests, andes run {:?})",
            andes.avg_qoe, lqsf.avg_qoe, fcfs.avg_qoe, andes.total_requests, andes.wall
        );
        assert!(
            andes.avg_qoe > lqsf.avg_qoe && lqsf.avg_qoe > fcfs.avg_qoe,
            "ordering broken at seed {seed}: {:.4} / {:.4} / {:.4}",
            andes.avg_qoe,
            lqsf.avg_qoe,
            fcfs.avg_qoe
        );
        assert!(
            andes.avg_qoe - fcfs.avg_qoe >= 0.10,
            "qoe gap {:.4} below 0.10 at seed {seed}",
            andes.avg_qoe - fcfs.avg_qoe
        );
        assert!(
            (350..=750).contains(&andes.total_requests),
            "trace size {} drifted from the intended scale",
            andes.total_requests
        );
        assert!(
            andes.wall < Duration::from_secs(120),
            "run exceeded two minutes: {:?}",
            andes.wall
        );
    }
    println!("PASS c06 policy ordering: andes > lqsf > fcfs with gap >= 0.10 on all seeds");
}

#[test]
fn c07_peak_queue_halves_under_qoe_scheduling() {
    for &seed in &SWEEP_SEEDS {
        let andes = sweep_run(seed, PolicyKind::Andes);
        let fcfs = sweep_run(seed, PolicyKind::Fcfs);
        println!(
            "  c07 seed {seed}: peak queue andes {} vs fcfs {}",
            andes.peak_queue, fcfs.peak_queue
        );
        assert!(
            (andes.peak_queue as f64) <= 0.5 * fcfs.peak_queue as f64,
            "peak queue {} not at most half of {} at seed {seed}",
            andes.peak_queue,
            fcfs.peak_queue
        );
    }
    println!("PASS c07 queue reduction: peak waiting queue at most half of fcfs on all seeds");
}

// ---------------------------------------------------------------------------
// 8. Refiner ablation under a 50% burst duty cycle.
// ---------------------------------------------------------------------------

/// The QoE half of this criterion is robust: every probed configuration
/// shows strictly lower average QoE without the refiner. The churn-ratio
/// half is not: most preemptions under saturation evict deeply buffered
/// requests whose stalls cost no QoE, so the gate rightly lets them
/// through (1-7% of admissions are vetoed), and the measured ratio swings
/// with the seed (1.1x-1.5x here). The threshold is asserted as stated
/// rather than weakened, so this test fails on seeds where the ratio
/// lands under 1.5.
#[test]
fn c08_refiner_ablation_cuts_churn_and_protects_qoe() {
    let mut failures = Vec::new();
    for seed in [1u64, 2, 3] {
        let with = run_experiment(&burst_config(PolicyKind::Andes, seed, 0.5, true))
            .unwrap()
            .summary;
        let without = run_experiment(&burst_config(PolicyKind::Andes, seed, 0.5, false))
            .unwrap()
            .summary;
        let per_req_with = with.total_preemptions as f64 / with.total_requests as f64;
        let per_req_without = without.total_preemptions as f64 / without.total_requests as f64;
        let ratio = per_req_without / per_req_with;
        println!(
            "  c08 seed {seed}: with refiner qoe {:.4} ({:.1} preempts/req), \
             without {:.4} ({:.1} preempts/req), ratio {ratio:.2}",
            with.avg_qoe, per_req_with, without.avg_qoe, per_req_without
        );
        if without.avg_qoe >= with.avg_qoe {
            failures.push(format!(
                "seed {seed}: qoe did not drop without the refiner \
                 ({:.4} -> {:.4})",
                with.avg_qoe, without.avg_qoe
            ));
        }
        if ratio < 1.5 {
            failures.push(format!(
                "seed {seed}: preemption ratio {ratio:.2} below 1.5"
            ));
        }
    }
    assert!(
        failures.is_empty(),
        "refiner ablation fell short:\n  {}",
        failures.join("\n  ")
    );
    println!("PASS c08 refiner ablation: >= 1.5x churn and strictly lower qoe without it");
}

// ---------------------------------------------------------------------------
// 9. Determinism: byte-identical reports.
// ---------------------------------------------------------------------------

#[test]
fn c09_identical_configs_produce_byte_identical_reports() {
    for (policy, seed) in [(PolicyKind::Andes, 7u64), (PolicyKind::Fcfs, 11)] {
        let mut cfg = ExperimentConfig::default();
        cfg.workload.seed = seed;
        cfg.workload.arrival = ArrivalConfig::Poisson {
            rate_rps: 0.4,
            duration_s: 300.0,
        };
        cfg.policy.policy = policy;
        let first = run_experiment(&cfg).unwrap().per_request_csv();
        let second = run_experiment(&cfg).unwrap().per_request_csv();
        assert!(
            first == second,
            "per-request CSV differs between identical runs ({policy:?}, seed {seed})"
        );
        assert!(!first.is_empty());
    }
    println!("PASS c09 determinism: per-request CSV byte-identical across reruns");
}

// ---------------------------------------------------------------------------
// 10. TTFT defaults and burst algebra.
// ---------------------------------------------------------------------------

#[test]
fn c10_ttft_defaults_and_burst_rate_algebra() {
    assert_eq!(default_ttft_target(4_999, 5_000.0), 1.0);
    assert_eq!(default_ttft_target(5_000, 5_000.0), 1.0);
    assert_eq!(default_ttft_target(5_001, 5_000.0), 5_001.0 / 5_000.0);

    let gen = TraceGenerator::from_preset(WorkloadPreset::Sharegpt, 77);
    let infeasible = BurstSpec {
        mean_rate_rps: 1.0,
        intensity: 4.0,
        duration_frac: 0.3,
        cycle_len_s: 100.0,
    };
    assert!(
        gen.cyclic_burst(&infeasible, 1_000.0).is_err(),
        "a burst phase carrying more than the whole mean rate must be rejected"
    );

    let spec = BurstSpec {
        mean_rate_rps: 1.0,
        intensity: 2.0,
        duration_frac: 0.35,
        cycle_len_s: 200.0,
    };
    let records = gen.cyclic_burst(&spec, 10_000.0).unwrap();
    let realized = records.len() as f64 / 10_000.0;
    assert!(
        (realized - 1.0).abs() <= 0.05,
        "realized mean rate {realized:.4} rps deviates over 5% from 1.0"
    );
    println!(
        "PASS c10 ttft and burst algebra: boundary targets exact, infeasible burst rejected, \
         mean rate conserved at {realized:.4} rps over {} requests",
        records.len()
    );
}
