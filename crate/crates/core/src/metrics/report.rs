use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EpisodeVerdict, MetricsError};
use crate::task::{Composition, Objective, Scope, Stratum, Tag};

/// Template axes and stratum attached to a verdict for breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLabels {
    pub scope: Scope,
    pub objective: Objective,
    pub composition: Composition,
    pub tags: Vec<Tag>,
    #[serde(default)]
    pub stratum: Option<Stratum>,
    /// Index of the repeated run this row belongs to.
    #[serde(default)]
    pub trial: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub verdict: EpisodeVerdict,
    #[serde(flatten)]
    pub labels: RowLabels,
}

/// Percentages over a group of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n: usize,
    pub sr: f64,
    pub pr: f64,
    pub fc: f64,
    pub ot: f64,
    #[serde(rename = "use")]
    pub use_: f64,
}

impl Aggregates {
    fn of<'a>(rows: impl IntoIterator<Item = &'a EpisodeVerdict>) -> Aggregates {
        let rows: Vec<_> = rows.into_iter().collect();
        let n = rows.len();
        let pct = |count: usize| if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 };
        let pr = if n == 0 { 0.0 } else { 100.0 * rows.iter().map(|v| v.progress).sum::<f64>() / n as f64 };
        Aggregates {
            n,
            sr: pct(rows.iter().filter(|v| v.success).count()),
            pr,
            fc: pct(rows.iter().filter(|v| v.false_complete).count()),
            ot: pct(rows.iter().filter(|v| v.overdue).count()),
            use_: pct(rows.iter().filter(|v| !v.clean).count()),
        }
    }

    fn metrics(&self) -> [f64; 5] {
        [self.sr, self.pr, self.fc, self.ot, self.use_]
    }

    fn from_metrics(n: usize, m: [f64; 5]) -> Aggregates {
        Aggregates { n, sr: m[0], pr: m[1], fc: m[2], ot: m[3], use_: m[4] }
    }
}

/// Mean and sample standard deviation of each metric across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: usize,
    pub mean: Aggregates,
    pub std: Aggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub overall: Aggregates,
    pub by_stratum: BTreeMap<String, Aggregates>,
    pub by_scope: BTreeMap<String, Aggregates>,
    pub by_objective: BTreeMap<String, Aggregates>,
    pub by_composition: BTreeMap<String, Aggregates>,
    pub by_tag: BTreeMap<String, Aggregates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<TrialStats>,
}

fn group<F>(rows: &[ReportRow], keys: F) -> BTreeMap<String, Aggregates>
where
    F: Fn(&ReportRow) -> Vec<String>,
{
    let mut buckets: BTreeMap<String, Vec<&EpisodeVerdict>> = BTreeMap::new();
    for r in rows {
        for k in keys(r) {
            buckets.entry(k).or_default().push(&r.verdict);
        }
    }
    buckets.into_iter().map(|(k, v)| (k, Aggregates::of(v))).collect()
}

pub fn aggregate(rows: Vec<ReportRow>) -> Result<BenchReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let overall = Aggregates::of(rows.iter().map(|r| &r.verdict));
    let by_trial = group(&rows, |r| vec![format!("{:08}", r.labels.trial)]);
    let trials = (by_trial.len() > 1).then(|| {
        let k = by_trial.len();
        let per: Vec<[f64; 5]> = by_trial.values().map(Aggregates::metrics).collect();
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        for i in 0..5 {
            mean[i] = per.iter().map(|m| m[i]).sum::<f64>() / k as f64;
            let ss: f64 = per.iter().map(|m| (m[i] - mean[i]).powi(2)).sum();
            std[i] = (ss / (k - 1) as f64).sqrt();
        }
        TrialStats {
            trials: k,
            mean: Aggregates::from_metrics(overall.n / k, mean),
            std: Aggregates::from_metrics(overall.n / k, std),
        }
    });
    Ok(BenchReport {
        overall,
        by_stratum: group(&rows, |r| r.labels.stratum.map(|s| s.label().to_string()).into_iter().collect()),
        by_scope: group(&rows, |r| vec![r.labels.scope.label()]),
        by_objective: group(&rows, |r| vec![r.labels.objective.label()]),
        by_composition: group(&rows, |r| vec![r.labels.composition.label()]),
        by_tag: group(&rows, |r| r.labels.tags.iter().map(Tag::label).collect()),
        trials,
        rows,
    })
}
