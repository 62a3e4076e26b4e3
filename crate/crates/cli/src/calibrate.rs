use std::collections::BTreeMap;
use std::io::Read;

use mgk_core::metrics::BenchReport;
use mgk_core::task::{stratify, Stratum};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: String,
    pub sr: f64,
    pub pr: f64,
}

/// Stratum per task plus the count at each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub labels: BTreeMap<String, Stratum>,
    pub counts: BTreeMap<Stratum, usize>,
}

pub fn calibrate(rows: &[TableRow]) -> Result<Calibration, HarnessError> {
    let mut labels = BTreeMap::new();
    for r in rows {
        let s = stratify(r.sr, r.pr).map_err(|e| HarnessError::MalformedTable(format!("{}: {e}", r.task)))?;
        if labels.insert(r.task.clone(), s).is_some() {
            return Err(HarnessError::MalformedTable(format!("task {} appears twice", r.task)));
        }
    }
    let mut counts: BTreeMap<Stratum, usize> = Stratum::ALL.iter().map(|s| (*s, 0)).collect();
    for s in labels.values() {
        *counts.get_mut(s).expect("all levels present") += 1;
    }
    Ok(Calibration { labels, counts })
}

/// Reads a `task,sr,pr` table with a header row; percentages in [0, 100].
pub fn calibrate_csv(input: impl Read) -> Result<Calibration, HarnessError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| HarnessError::MalformedTable(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["task", "sr", "pr"] {
        return Err(HarnessError::MalformedTable(format!("expected header task,sr,pr, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<TableRow>().enumerate() {
        rows.push(rec.map_err(|e| HarnessError::MalformedTable(format!("row {}: {e}", i + 1)))?);
    }
    calibrate(&rows)
}

/// Per-task mean SR and PR, in percent, from a report's rows.
pub fn table_from_report(report: &BenchReport) -> Vec<TableRow> {
    let mut acc: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
    for r in &report.rows {
        let e = acc.entry(&r.verdict.template_id).or_default();
        e.0 += 1;
        e.1 += if r.verdict.success { 1.0 } else { 0.0 };
        e.2 += r.verdict.progress;
    }
    acc.into_iter()
        .map(|(task, (n, s, p))| TableRow { task: task.to_string(), sr: 100.0 * s / n as f64, pr: 100.0 * p / n as f64 })
        .collect()
}
