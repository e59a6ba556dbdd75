//! Simulation outputs: per-request rows, a time series of engine state,
//! and an aggregate summary.
//!
//! All float formatting goes through the shortest-roundtrip `Display`
//! path, so rerunning the same simulation produces byte-identical files.

use serde::{Deserialize, Serialize};
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStatus {
    /// Generated every expected token.
    Finished,
    /// Still in flight (or not yet served) when the simulation ended.
    Unfinished,
    /// Refused at arrival: the request could never fit in KV memory.
    Rejected,
}

/// Final accounting for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRow {
    pub id: u64,
    pub arrival: f64,
    /// First client-side delivery minus arrival; `None` when no token was
    /// ever delivered.
    pub ttft: Option<f64>,
    pub qoe: f64,
    /// Observed token delivery speed `(n - 1) / (last - first)` over
    /// client-side deliveries; 0 with fewer than two tokens.
    pub avg_tds: f64,
    pub preemptions: u32,
    pub status: RequestStatus,
    /// Instants the request was evicted from the batch (audit trail; not
    /// part of the CSV).
    pub preempt_times: Vec<f64>,
    /// Every admission instant: the initial one, then one per rejoin
    /// after an eviction.
    pub resume_times: Vec<f64>,
}

/// Engine state sampled on a fixed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub time: f64,
    /// Requests waiting to be scheduled: never started, or re-queued for
    /// a recompute after eviction. Swapped-out requests are in service
    /// (held on the swapped list), not queued.
    pub queue_len: usize,
    pub running: usize,
    /// Fraction of KV capacity in use.
    pub kv_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg_qoe: f64,
    pub p50_ttft: Option<f64>,
    pub p90_ttft: Option<f64>,
    pub p99_ttft: Option<f64>,
    /// Mean per-request delivery speed over requests with at least two
    /// delivered tokens.
    pub avg_tds: f64,
    /// Exact maximum of `queue_len` over every event, not just samples.
    pub peak_queue: usize,
    pub frac_qoe_ge_095: f64,
    pub total_requests: usize,
    pub finished: usize,
    pub rejected: usize,
    pub total_preemptions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub rows: Vec<RequestRow>,
    pub series: Vec<SeriesPoint>,
    pub summary: Summary,
}

/// Nearest-rank percentile of an ascending-sorted slice.
pub fn percentile_nearest_rank(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Aggregates rows into a [`Summary`]. `peak_queue` comes from the engine,
/// which tracks it per event rather than per sample.
pub fn build_summary(rows: &[RequestRow], peak_queue: usize) -> Summary {
    let total = rows.len();
    let avg_qoe = if total == 0 {
        0.0
    } else {
        rows.iter().map(|r| r.qoe).sum::<f64>() / total as f64
    };
    let mut ttfts: Vec<f64> = rows.iter().filter_map(|r| r.ttft).collect();
    ttfts.sort_by(f64::total_cmp);
    let speeds: Vec<f64> = rows
        .iter()
        .filter(|r| r.avg_tds > 0.0)
        .map(|r| r.avg_tds)
        .collect();
    let avg_tds = if speeds.is_empty() {
        0.0
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    };
    let frac_qoe_ge_095 = if total == 0 {
        0.0
    } else {
        rows.iter().filter(|r| r.qoe >= 0.95).count() as f64 / total as f64
    };
    Summary {
        avg_qoe,
        p50_ttft: percentile_nearest_rank(&ttfts, 50.0),
        p90_ttft: percentile_nearest_rank(&ttfts, 90.0),
        p99_ttft: percentile_nearest_rank(&ttfts, 99.0),
        avg_tds,
        peak_queue,
        frac_qoe_ge_095,
        total_requests: total,
        finished: rows
            .iter()
            .filter(|r| r.status == RequestStatus::Finished)
            .count(),
        rejected: rows
            .iter()
            .filter(|r| r.status == RequestStatus::Rejected)
            .count(),
        total_preemptions: rows.iter().map(|r| u64::from(r.preemptions)).sum(),
    }
}

impl SimReport {
    /// One CSV row per request: `id,arrival,ttft,qoe,avg_tds,preemptions`.
    /// A request that never delivered a token has an empty `ttft` field.
    pub fn per_request_csv(&self) -> String {
        let mut out = String::from("id,arrival,ttft,qoe,avg_tds,preemptions\n");
        for r in &self.rows {
            let ttft = r.ttft.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.id, r.arrival, ttft, r.qoe, r.avg_tds, r.preemptions
            ));
        }
        out
    }

    /// Sampled engine state: `time,queue_len,running,kv_frac`.
    pub fn time_series_csv(&self) -> String {
        let mut out = String::from("time,queue_len,running,kv_frac\n");
        for p in &self.series {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.time, p.queue_len, p.running, p.kv_frac
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.summary).expect("summary serializes cleanly");
        text.push('\n');
        text
    }

    /// Writes `per_request.csv`, `time_series.csv`, and `summary.json`
    /// under `dir`, creating it if needed.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("per_request.csv"), self.per_request_csv())?;
        std::fs::write(dir.join("time_series.csv"), self.time_series_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}
