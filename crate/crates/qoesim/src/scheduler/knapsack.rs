//! Batch-composition solvers.
//!
//! Choosing which requests to serve next is a knapsack: each candidate has
//! a memory weight (its context length), a value (its scheduling gain), and
//! the batch must hold exactly-or-at-most a target number of requests
//! within the KV capacity. Two solvers are provided:
//!
//! * [`greedy_pack`]: sort by priority (gain per context token) and admit
//!   until the first candidate that does not fit. Linear-time, approximate.
//! * [`dp_solve`]: exact optimum over sets of exactly `batch_exact`
//!   requests via dynamic programming over (item, count, used-memory).
//!   Cubic in the worst case, so guarded by a cell budget.

use thiserror::Error;

/// One schedulable candidate, with its gain already evaluated at the batch
/// size under consideration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackItem {
    pub id: u64,
    /// KV tokens the request occupies if served.
    pub weight: u64,
    /// Objective contribution if served instead of left waiting.
    pub gain: f64,
    /// Gain per KV token; the greedy sort key.
    pub priority: f64,
    /// Arrival instant; breaks priority ties in favor of older requests.
    pub arrival: f64,
}

/// A solver's chosen batch. `chosen` is ordered by descending priority
/// (ties: earlier arrival, then smaller id).
#[derive(Debug, Clone, PartialEq)]
pub struct PackOutcome {
    pub chosen: Vec<u64>,
    pub objective: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("dp table needs {needed} cells, over the budget of {budget}; use the greedy solver or raise the budget")]
pub struct DpBudgetExceeded {
    pub needed: u128,
    pub budget: u64,
}

fn priority_order(items: &[PackItem]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&items[a], &items[b]);
        ib.priority
            .partial_cmp(&ia.priority)
            .expect("priorities are finite")
            .then(ia.arrival.partial_cmp(&ib.arrival).expect("arrivals are finite"))
            .then(ia.id.cmp(&ib.id))
    });
    order
}

/// Admits candidates in descending priority while the batch bound and KV
/// capacity both hold, stopping at the first candidate that does not fit.
/// With `skip_unfit`, oversized candidates are skipped instead and packing
/// continues (a denser but order-breaking variant, off by default).
pub fn greedy_pack(
    items: &[PackItem],
    batch_limit: u32,
    capacity: u64,
    skip_unfit: bool,
) -> PackOutcome {
    let mut chosen = Vec::new();
    let mut objective = 0.0;
    let mut used = 0u64;
    for idx in priority_order(items) {
        if chosen.len() as u32 >= batch_limit {
            break;
        }
        let item = &items[idx];
        if used + item.weight <= capacity {
            used += item.weight;
            objective += item.gain;
            chosen.push(item.id);
        } else if !skip_unfit {
            break;
        }
    }
    PackOutcome { chosen, objective }
}

/// Exact optimum over subsets of exactly `batch_exact` items with total
/// weight at most `capacity`. Returns `None` when no such subset exists.
///
/// The table holds the best value over the first `i` items using exactly
/// `b` of them at exactly `m` weight; the answer is the maximum over `m` at
/// `b = batch_exact`. Memory rolls over `i`, with the take/skip choice kept
/// as one bit per cell for reconstruction.
pub fn dp_solve(
    items: &[PackItem],
    batch_exact: u32,
    capacity: u64,
    budget: u64,
) -> Result<Option<PackOutcome>, DpBudgetExceeded> {
    let n = items.len();
    let b_max = batch_exact as usize;
    if b_max == 0 || b_max > n {
        return Ok(None);
    }
    let cap = capacity as usize;
    let needed = (n as u128 + 1) * (b_max as u128 + 1) * (cap as u128 + 1);
    if needed > budget as u128 {
        return Err(DpBudgetExceeded {
            needed,
            budget,
        });
    }

    let width = cap + 1;
    let plane = (b_max + 1) * width;
    let mut prev = vec![f64::NEG_INFINITY; plane];
    let mut next = vec![f64::NEG_INFINITY; plane];
    prev[0] = 0.0;

    let total_cells = (n + 1) * plane;
    let mut take = vec![0u64; total_cells / 64 + 1];
    let mark = |i: usize, cell: usize, bits: &mut Vec<u64>| {
        let flat = i * plane + cell;
        bits[flat / 64] |= 1 << (flat % 64);
    };
    let is_marked = |i: usize, cell: usize, bits: &[u64]| {
        let flat = i * plane + cell;
        bits[flat / 64] >> (flat % 64) & 1 == 1
    };

    for (i, item) in items.iter().enumerate() {
        let w = item.weight as usize;
        next.copy_from_slice(&prev);
        if w <= cap {
            let b_hi = (i + 1).min(b_max);
            for b in 1..=b_hi {
                let row = b * width;
                let prev_row = (b - 1) * width;
                for m in w..=cap {
                    let from = prev[prev_row + m - w];
                    if from == f64::NEG_INFINITY {
                        continue;
                    }
                    let cand = from + item.gain;
                    if cand > next[row + m] {
                        next[row + m] = cand;
                        mark(i + 1, row + m, &mut take);
                    }
                }
            }
        }
        std::mem::swap(&mut prev, &mut next);
    }

    let row = b_max * width;
    let mut best_m = None;
    let mut best = f64::NEG_INFINITY;
    for m in 0..=cap {
        if prev[row + m] > best {
            best = prev[row + m];
            best_m = Some(m);
        }
    }
    let Some(mut m) = best_m else {
        return Ok(None);
    };
    if best == f64::NEG_INFINITY {
        return Ok(None);
    }

    // Reconstruct: walking items backward, a marked cell means item i-1 was
    // taken on the path through (b, m).
    let mut picked = Vec::with_capacity(b_max);
    let mut b = b_max;
    for i in (1..=n).rev() {
        if b == 0 {
            break;
        }
        let cell = b * width + m;
        if is_marked(i, cell, &take) {
            picked.push(i - 1);
            b -= 1;
            m -= items[i - 1].weight as usize;
        }
    }
    debug_assert_eq!(b, 0, "dp reconstruction must consume the batch count");

    let order = priority_order(items);
    let rank: std::collections::BTreeMap<usize, usize> =
        order.iter().enumerate().map(|(r, &idx)| (idx, r)).collect();
    picked.sort_by_key(|idx| rank[idx]);
    Ok(Some(PackOutcome {
        chosen: picked.iter().map(|&idx| items[idx].id).collect(),
        objective: best,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn item(id: u64, weight: u64, gain: f64) -> PackItem {
        PackItem {
            id,
            weight,
            gain,
            priority: gain / weight as f64,
            arrival: id as f64,
        }
    }

    /// Exhaustive reference: best objective over all subsets of exactly
    /// `batch` items fitting in `capacity`.
    fn enumerate_exact(items: &[PackItem], batch: u32, capacity: u64) -> Option<f64> {
        let n = items.len();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() != batch {
                continue;
            }
            let mut weight = 0;
            let mut value = 0.0;
            for (i, it) in items.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    weight += it.weight;
                    value += it.gain;
                }
            }
            if weight <= capacity && best.is_none_or(|b| value > b) {
                best = Some(value);
            }
        }
        best
    }

    #[test]
    fn greedy_takes_the_top_priorities_that_fit() {
        let items = vec![
            PackItem { id: 1, weight: 2, gain: 1.8, priority: 0.9, arrival: 0.0 },
            PackItem { id: 2, weight: 3, gain: 1.5, priority: 0.5, arrival: 1.0 },
            PackItem { id: 3, weight: 10, gain: 1.0, priority: 0.1, arrival: 2.0 },
        ];
        let out = greedy_pack(&items, 2, 6, false);
        assert_eq!(out.chosen, vec![1, 2]);
        assert!((out.objective - 3.3).abs() < 1e-12);
    }

    #[test]
    fn greedy_stops_at_the_first_unfitting_candidate() {
        let items = vec![item(1, 10, 9.0), item(2, 2, 0.5)];
        // Item 1 has top priority but does not fit: default semantics stop
        // the walk entirely rather than reaching item 2.
        let strict = greedy_pack(&items, 2, 5, false);
        assert!(strict.chosen.is_empty());
        let skipping = greedy_pack(&items, 2, 5, true);
        assert_eq!(skipping.chosen, vec![2]);
    }

    #[test]
    fn greedy_breaks_priority_ties_by_arrival_then_id() {
        let mut items = vec![
            PackItem { id: 7, weight: 4, gain: 0.4, priority: 0.1, arrival: 3.0 },
            PackItem { id: 5, weight: 4, gain: 0.4, priority: 0.1, arrival: 1.0 },
            PackItem { id: 6, weight: 4, gain: 0.4, priority: 0.1, arrival: 1.0 },
        ];
        let out = greedy_pack(&items, 2, 8, false);
        assert_eq!(out.chosen, vec![5, 6]);
        items.truncate(2);
        let out = greedy_pack(&items, 1, 8, false);
        assert_eq!(out.chosen, vec![5]);
    }

    #[test]
    fn dp_matches_hand_enumeration_on_a_tight_instance() {
        // Pairs: {1,2} needs 7 (> 6), {1,3} needs 6 at value 0.85,
        // {2,3} needs 5 at value 0.75. The optimum is {1,3}.
        let items = vec![item(1, 4, 0.5), item(2, 3, 0.4), item(3, 2, 0.35)];
        let out = dp_solve(&items, 2, 6, u64::MAX).unwrap().unwrap();
        assert!((out.objective - 0.85).abs() < 1e-12);
        let mut chosen = out.chosen.clone();
        chosen.sort_unstable();
        assert_eq!(chosen, vec![1, 3]);
    }

    #[test]
    fn dp_reports_infeasible_batch_targets() {
        let items = vec![item(1, 5, 1.0), item(2, 5, 1.0)];
        assert_eq!(dp_solve(&items, 2, 9, u64::MAX).unwrap(), None);
        assert_eq!(dp_solve(&items, 3, 100, u64::MAX).unwrap(), None);
        assert_eq!(dp_solve(&items, 0, 100, u64::MAX).unwrap(), None);
    }

    #[test]
    fn dp_refuses_tables_over_the_cell_budget() {
        let items: Vec<PackItem> = (0..10).map(|i| item(i, 5, 1.0)).collect();
        let err = dp_solve(&items, 5, 1000, 100).unwrap_err();
        assert!(err.needed > 100);
        assert_eq!(err.budget, 100);
        assert!(err.to_string().contains("greedy"));
    }

    #[test]
    fn dp_agrees_with_exhaustive_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..150 {
            let n = rng.gen_range(1..=8);
            let capacity = rng.gen_range(1..=25u64);
            let items: Vec<PackItem> = (0..n)
                .map(|i| {
                    // Dyadic gains keep f64 sums exact, so solver and
                    // enumeration agree bit-for-bit.
                    let gain = rng.gen_range(0..1024) as f64 / 1024.0;
                    let weight = rng.gen_range(1..=capacity.max(1));
                    PackItem {
                        id: i,
                        weight,
                        gain,
                        priority: gain / weight as f64,
                        arrival: i as f64,
                    }
                })
                .collect();
            for batch in 1..=n as u32 {
                let expect = enumerate_exact(&items, batch, capacity);
                let got = dp_solve(&items, batch, capacity, u64::MAX).unwrap();
                match (expect, &got) {
                    (None, None) => {}
                    (Some(e), Some(out)) => {
                        assert_eq!(out.objective, e, "objective mismatch at batch {batch}");
                        assert_eq!(out.chosen.len(), batch as usize);
                        let weight: u64 = out
                            .chosen
                            .iter()
                            .map(|id| items.iter().find(|it| it.id == *id).unwrap().weight)
                            .sum();
                        assert!(weight <= capacity);
                    }
                    (e, g) => panic!("feasibility mismatch at batch {batch}: {e:?} vs {g:?}"),
                }
            }
        }
    }

    #[test]
    fn greedy_never_beats_the_exact_optimum_at_its_realized_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..150 {
            let n = rng.gen_range(1..=8);
            let capacity = rng.gen_range(1..=25u64);
            let items: Vec<PackItem> = (0..n)
                .map(|i| {
                    let gain = rng.gen_range(0..1024) as f64 / 1024.0;
                    let weight = rng.gen_range(1..=capacity.max(1));
                    PackItem {
                        id: i,
                        weight,
                        gain,
                        priority: gain / weight as f64,
                        arrival: i as f64,
                    }
                })
                .collect();
            for batch in 1..=n as u32 {
                let greedy = greedy_pack(&items, batch, capacity, false);
                let realized = greedy.chosen.len() as u32;
                if realized == 0 {
                    continue;
                }
                let exact = dp_solve(&items, realized, capacity, u64::MAX)
                    .unwrap()
                    .expect("a greedy-feasible size must be dp-feasible");
                assert!(
                    greedy.objective <= exact.objective + 1e-9,
                    "greedy {} beat the exact optimum {} for {} items",
                    greedy.objective,
                    exact.objective,
                    realized
                );
            }
        }
    }
}
