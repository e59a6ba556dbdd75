//! Post-run analysis: empirical distribution curves and side-by-side
//! policy comparison tables.

use crate::sim::report::Summary;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("failed to read csv: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {wanted:?} not found; file has {available:?}")]
    MissingColumn {
        wanted: String,
        available: Vec<String>,
    },
    #[error("row {row}, column {column}: {value:?} is not numeric")]
    BadCell {
        row: u64,
        column: String,
        value: String,
    },
}

/// Empirical CDF: one `(value, fraction_at_or_below)` point per input
/// value, sorted ascending, fractions stepping by `1/n` up to exactly 1.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, v)| (v, (k + 1) as f64 / n))
        .collect()
}

/// Renders a CDF as a two-column CSV headed `<column>,cum_frac`.
pub fn cdf_csv(column: &str, values: &[f64]) -> String {
    let mut out = format!("{column},cum_frac\n");
    for (value, frac) in cdf(values) {
        out.push_str(&format!("{value},{frac}\n"));
    }
    out
}

/// Reads one numeric column from a headed CSV, skipping empty cells
/// (absent optional values such as a never-served request's TTFT).
pub fn read_numeric_column(
    path: impl AsRef<Path>,
    column: &str,
) -> Result<Vec<f64>, AnalysisError> {
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => AnalysisError::Io(io),
        other => AnalysisError::Csv(csv::Error::from(std::io::Error::other(format!(
            "{other:?}"
        )))),
    })?;
    let headers = reader.headers()?.clone();
    let index = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| AnalysisError::MissingColumn {
            wanted: column.to_string(),
            available: headers.iter().map(str::to_string).collect(),
        })?;
    let mut values = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let record = result?;
        let cell = record.get(index).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let value: f64 = cell.parse().map_err(|_| AnalysisError::BadCell {
            row: row as u64 + 2,
            column: column.to_string(),
            value: cell.to_string(),
        })?;
        values.push(value);
    }
    Ok(values)
}

/// Formats labeled run summaries as an aligned text table, one run per
/// row. Percentiles missing because no request was ever served render
/// as `-`.
pub fn comparison_table(rows: &[(String, Summary)]) -> String {
    let headers = [
        "run",
        "avg_qoe",
        "qoe>=0.95",
        "p50_ttft",
        "p90_ttft",
        "p99_ttft",
        "avg_tds",
        "peak_queue",
        "preemptions",
        "finished",
        "rejected",
    ];
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut table: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for (label, s) in rows {
        table.push(vec![
            label.clone(),
            format!("{:.4}", s.avg_qoe),
            format!("{:.4}", s.frac_qoe_ge_095),
            fmt_opt(s.p50_ttft),
            fmt_opt(s.p90_ttft),
            fmt_opt(s.p99_ttft),
            format!("{:.3}", s.avg_tds),
            s.peak_queue.to_string(),
            s.total_preemptions.to_string(),
            format!("{}/{}", s.finished, s.total_requests),
            s.rejected.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                out.push_str(&format!("{:<width$}", cell, width = widths[0]));
            } else {
                out.push_str(&format!("  {:>width$}", cell, width = widths[c]));
            }
        }
        out.push('\n');
    }
    out
}
