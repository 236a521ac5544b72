//! Metric and diagnostic exports. Floats are written at 6 significant
//! digits in both JSON and CSV.

use std::fmt::Write as _;
use std::path::Path;

use contrastforge_core::eval::{MetricsReport, TopKMetrics};
use contrastforge_core::sampling::{DiagnosticsTrace, Modality};

use crate::fsutil::{atomic_write, read_to_string};
use crate::{Error, Result};

pub const METRICS_CSV_HEADER: &str = "metric,K,value";
pub const DIAGNOSTICS_CSV_HEADER: &str = "epoch,modality,value";

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

pub fn fmt_sig6(x: f64) -> String {
    format!("{}", round_sig6(x))
}

pub fn rounded(report: &MetricsReport) -> MetricsReport {
    MetricsReport {
        metrics: report
            .metrics
            .iter()
            .map(|m| TopKMetrics { k: m.k, recall: round_sig6(m.recall), ndcg: round_sig6(m.ndcg) })
            .collect(),
        validation_series: report.validation_series.iter().map(|&v| round_sig6(v)).collect(),
        ..report.clone()
    }
}

pub fn metrics_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(&rounded(report)).expect("report serializes");
    s.push('\n');
    s
}

pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::new();
    writeln!(out, "{METRICS_CSV_HEADER}").expect("write to String");
    for m in &report.metrics {
        writeln!(out, "recall,{},{}", m.k, fmt_sig6(m.recall)).expect("write to String");
        writeln!(out, "ndcg,{},{}", m.k, fmt_sig6(m.ndcg)).expect("write to String");
    }
    let epoch = report.convergence_epoch.map_or(String::new(), |e| e.to_string());
    writeln!(out, "convergence_epoch,,{epoch}").expect("write to String");
    out
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`.
pub fn export_metrics(report: &MetricsReport, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    atomic_write(&json, metrics_json(report).as_bytes())?;
    atomic_write(&csv, metrics_csv(report).as_bytes())?;
    Ok(vec![json, csv])
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsReport> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn diagnostics_csv(trace: &DiagnosticsTrace) -> String {
    let mut out = String::new();
    writeln!(out, "{DIAGNOSTICS_CSV_HEADER}").expect("write to String");
    for (epoch, modality, value) in trace.iter() {
        writeln!(out, "{epoch},{},{}", modality.as_str(), fmt_sig6(value)).expect("write to String");
    }
    out
}

pub fn parse_diagnostics_csv(text: &str, path: &Path) -> Result<DiagnosticsTrace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == DIAGNOSTICS_CSV_HEADER => {}
        _ => return Err(Error::format(path, format!("expected header `{DIAGNOSTICS_CSV_HEADER}`"))),
    }
    let mut trace = DiagnosticsTrace::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse { path: path.to_path_buf(), line: n + 1, message: m };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(err("expected 3 fields".to_string()));
        }
        let epoch: usize = parts[0].parse().map_err(|e| err(format!("epoch: {e}")))?;
        let modality: Modality = parts[1].parse().map_err(|e: contrastforge_core::Error| err(e.to_string()))?;
        let value: f64 = parts[2].parse().map_err(|e| err(format!("value: {e}")))?;
        trace.insert(epoch, modality, value).map_err(|e| err(e.to_string()))?;
    }
    Ok(trace)
}
