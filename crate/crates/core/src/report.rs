//! CSV traces, plot-data text and JSON writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::driver::{PosteriorTraceRow, RegretLedger};
use crate::{Error, Result};

/// Column order of the per-seed ledger CSV.
pub const LEDGER_HEADER: [&str; 9] = [
    "t",
    "h_t",
    "context",
    "realized_regret",
    "expected_model_value",
    "optimism_term",
    "step_loss",
    "posterior_entropy",
    "posterior_mass_true",
];

pub fn write_ledger_csv(path: &Path, ledger: &RegretLedger) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LEDGER_HEADER)?;
    for e in &ledger.entries {
        w.write_record([
            e.t.to_string(),
            e.h_t.to_string(),
            e.context.to_string(),
            e.realized_regret.to_string(),
            e.expected_model_value.to_string(),
            e.optimism_term.to_string(),
            e.step_loss.to_string(),
            e.posterior_entropy.to_string(),
            e.posterior_mass_true.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-format posterior trace: one row per round and model.
pub fn write_trace_csv(path: &Path, trace: &[PosteriorTraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "h_t", "model", "weight", "root_value"])?;
    for row in trace {
        for (m, (p, v)) in row.weights.iter().zip(&row.root_values).enumerate() {
            w.write_record([
                row.t.to_string(),
                row.h_t.to_string(),
                m.to_string(),
                p.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Two-column whitespace-separated data with gnuplot `#` header lines.
pub fn write_plot(path: &Path, title: &str, columns: [&str; 2], rows: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
    let mut out = format!("# {title}\n# {} {}\n", columns[0], columns[1]);
    for (x, y) in rows {
        out.push_str(&format!("{x} {y}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Element-wise mean of equal-length series.
pub fn mean_series(series: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let n = series.len() as f64;
    (0..first.len())
        .map(|i| series.iter().map(|s| s[i]).sum::<f64>() / n)
        .collect()
}
