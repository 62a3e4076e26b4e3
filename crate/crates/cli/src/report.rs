use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mgk_core::metrics::{BenchReport, ReportRow};
use mgk_core::script::AgentKind;
use mgk_core::task::Stratum;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// The JSON document written for a run. `generated_at` is the only field
/// that differs between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub generated_at: String,
    pub agent: AgentKind,
    pub seeds: u32,
    pub report: BenchReport,
}

impl ReportFile {
    pub fn new(agent: AgentKind, seeds: u32, report: BenchReport) -> Self {
        Self { generated_at: chrono::Utc::now().to_rfc3339(), agent, seeds, report }
    }

    /// Serialized form with the timestamp blanked, for comparing runs.
    pub fn comparable_bytes(&self) -> Vec<u8> {
        let mut copy = self.clone();
        copy.generated_at.clear();
        serde_json::to_vec_pretty(&copy).expect("reports serialize")
    }
}

pub const COLUMNS: [&str; 9] = ["SR", "PR", "L1", "L2", "L3", "L4", "FC", "OT", "USE"];

/// One table line: each column's mean across trials and, with more than
/// one trial, its sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryLine {
    pub group: String,
    pub n: usize,
    pub cells: [Option<(f64, Option<f64>)>; 9],
}

fn pct(rows: &[&ReportRow], f: impl Fn(&ReportRow) -> f64) -> Option<f64> {
    (!rows.is_empty()).then(|| 100.0 * rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn trial_metrics(rows: &[&ReportRow]) -> [Option<f64>; 9] {
    let in_stratum = |s: Stratum| -> Vec<&ReportRow> { rows.iter().copied().filter(|r| r.labels.stratum == Some(s)).collect() };
    let sr = |rs: &[&ReportRow]| pct(rs, |r| flag(r.verdict.success));
    [
        sr(rows),
        pct(rows, |r| r.verdict.progress),
        sr(&in_stratum(Stratum::L1)),
        sr(&in_stratum(Stratum::L2)),
        sr(&in_stratum(Stratum::L3)),
        sr(&in_stratum(Stratum::L4)),
        pct(rows, |r| flag(r.verdict.false_complete)),
        pct(rows, |r| flag(r.verdict.overdue)),
        pct(rows, |r| flag(!r.verdict.clean)),
    ]
}

fn line(group: String, rows: &[&ReportRow], multi_trial: bool) -> SummaryLine {
    let mut by_trial: BTreeMap<u32, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        by_trial.entry(r.labels.trial).or_default().push(r);
    }
    let per: Vec<[Option<f64>; 9]> = by_trial.values().map(|rs| trial_metrics(rs)).collect();
    let mut cells = [None; 9];
    for (i, cell) in cells.iter_mut().enumerate() {
        let vals: Vec<f64> = per.iter().filter_map(|m| m[i]).collect();
        if vals.is_empty() {
            continue;
        }
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let std = (multi_trial && vals.len() > 1)
            .then(|| (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
        *cell = Some((mean, if multi_trial { Some(std.unwrap_or(0.0)) } else { None }));
    }
    SummaryLine { group, n: rows.len(), cells }
}

/// Overall line, then optional per-stratum and per-tag lines.
pub fn summarize(report: &BenchReport, per_stratum: bool, per_tag: bool) -> Vec<SummaryLine> {
    let trials: BTreeSet<u32> = report.rows.iter().map(|r| r.labels.trial).collect();
    let multi = trials.len() > 1;
    let all: Vec<&ReportRow> = report.rows.iter().collect();
    let mut out = vec![line("overall".into(), &all, multi)];
    if per_stratum {
        for s in Stratum::ALL {
            let rs: Vec<&ReportRow> = all.iter().copied().filter(|r| r.labels.stratum == Some(s)).collect();
            if !rs.is_empty() {
                out.push(line(format!("stratum:{}", s.label()), &rs, multi));
            }
        }
    }
    if per_tag {
        let tags: BTreeSet<String> = all.iter().flat_map(|r| r.labels.tags.iter().map(|t| t.label())).collect();
        for t in tags {
            let rs: Vec<&ReportRow> = all.iter().copied().filter(|r| r.labels.tags.iter().any(|x| x.label() == t)).collect();
            out.push(line(format!("tag:{t}"), &rs, multi));
        }
    }
    out
}

fn cell_text(c: &Option<(f64, Option<f64>)>) -> String {
    match c {
        None => "-".into(),
        Some((m, None)) => format!("{m:.1}"),
        Some((m, Some(s))) => format!("{m:.1}±{s:.1}"),
    }
}

/// Fixed-width text table for the terminal.
pub fn render_table(lines: &[SummaryLine]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<22}{:>6}", "group", "n");
    for c in COLUMNS {
        let _ = write!(out, "{c:>13}");
    }
    out.push('\n');
    for l in lines {
        let _ = write!(out, "{:<22}{:>6}", l.group, l.n);
        for c in &l.cells {
            let _ = write!(out, "{:>13}", cell_text(c));
        }
        out.push('\n');
    }
    out
}

fn summary_csv(lines: &[SummaryLine], with_std: bool) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "n".to_string()];
    for c in COLUMNS {
        header.push(c.to_string());
        if with_std {
            header.push(format!("{c}_std"));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for l in lines {
        let mut rec = vec![l.group.clone(), l.n.to_string()];
        for c in &l.cells {
            rec.push(c.map(|(m, _)| format!("{m:.4}")).unwrap_or_default());
            if with_std {
                rec.push(c.and_then(|(_, s)| s).map(|s| format!("{s:.4}")).unwrap_or_default());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Other(e.to_string()))
}

fn rows_csv(report: &BenchReport) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "template_id", "seed", "trial", "stratum", "scope", "objective", "composition", "tags", "success", "progress",
        "false_complete", "overdue", "post_success_abort", "clean", "side_effects", "reward", "steps_used",
        "truncated_by", "declared",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        let v = &r.verdict;
        let l = &r.labels;
        w.write_record([
            v.template_id.clone(),
            v.seed.to_string(),
            l.trial.to_string(),
            l.stratum.map(|s| s.label().to_string()).unwrap_or_default(),
            l.scope.label(),
            l.objective.label(),
            l.composition.label(),
            l.tags.iter().map(|t| t.label()).collect::<Vec<_>>().join(";"),
            v.success.to_string(),
            format!("{:.4}", v.progress),
            v.false_complete.to_string(),
            v.overdue.to_string(),
            v.post_success_abort.to_string(),
            v.clean.to_string(),
            v.side_effect_paths.len().to_string(),
            v.reward.clone(),
            v.steps_used.to_string(),
            text(&v.truncated_by),
            text(&v.declared),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Other(e.to_string()))
}

/// Serde name of a unit enum value.
fn text<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Other(e.to_string())
}

/// Writes `report.json`, plus `summary.csv` and `rows.csv` when `csv` is
/// set. Returns the paths written.
pub fn emit_report(
    file: &ReportFile,
    out_dir: &Path,
    csv: bool,
    per_stratum: bool,
    per_tag: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    if file.report.rows.is_empty() {
        return Err(HarnessError::Other("empty report".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let json_path = out_dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(file).expect("reports serialize"))?;
    written.push(json_path);
    if csv {
        let lines = summarize(&file.report, per_stratum, per_tag);
        let multi = lines[0].cells.iter().flatten().any(|(_, s)| s.is_some());
        let p = out_dir.join("summary.csv");
        std::fs::write(&p, summary_csv(&lines, multi)?)?;
        written.push(p);
        let p = out_dir.join("rows.csv");
        std::fs::write(&p, rows_csv(&file.report)?)?;
        written.push(p);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<ReportFile, HarnessError> {
    serde_json::from_slice(&std::fs::read(path)?).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
