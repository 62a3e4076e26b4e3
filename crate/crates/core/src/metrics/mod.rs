//! Episode verdicts, masked side-effect detection, the shaped reward and
//! benchmark aggregation.

mod report;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Declared;
use crate::os::{AppCatalog, ANSWER_SHEET_STORE, SESSION_STORE};
use crate::state::{diff, Snapshot, StateError};
use crate::task::{judge, Judgement, TaskError, TaskInstance};

pub use report::{aggregate, Aggregates, BenchReport, ReportRow, RowLabels, TrialStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("store sets differ: {0}")]
    StoreSetMismatch(String),
    #[error("value outside domain: {0}")]
    OutOfDomain(String),
    #[error("no verdicts to aggregate")]
    EmptyInput,
}

impl From<StateError> for MetricsError {
    fn from(e: StateError) -> Self {
        MetricsError::StoreSetMismatch(e.to_string())
    }
}

impl From<TaskError> for MetricsError {
    fn from(e: TaskError) -> Self {
        MetricsError::StoreSetMismatch(e.to_string())
    }
}

/// Path patterns whose changes count as expected. A pattern covers itself
/// and its whole subtree; a trailing `/*` is accepted and means the same.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedChangeMask {
    pub allowed_paths: Vec<String>,
}

impl ExpectedChangeMask {
    pub fn new(paths: impl IntoIterator<Item = String>) -> Self {
        let mut allowed_paths: Vec<String> = paths.into_iter().collect();
        allowed_paths.sort();
        allowed_paths.dedup();
        Self { allowed_paths }
    }

    /// Goal-check paths, template allowances, the session and answer sheet,
    /// and every app's transient subtrees.
    pub fn for_instance(inst: &TaskInstance, catalog: &AppCatalog) -> Self {
        let goal = inst.goal_checks.iter().map(|c| c.predicate.path.clone());
        let fixed = [SESSION_STORE.to_string(), ANSWER_SHEET_STORE.to_string()];
        let transient = catalog
            .apps
            .values()
            .flat_map(|a| a.manifest.transient.iter().map(move |t| format!("{}/{t}", a.id())));
        Self::new(goal.chain(inst.allow.iter().cloned()).chain(fixed).chain(transient))
    }

    pub fn covers(&self, path: &str) -> bool {
        self.allowed_paths.iter().any(|p| {
            let p = p.strip_suffix("/*").unwrap_or(p);
            path == p || path.strip_prefix(p).is_some_and(|rest| rest.starts_with('/'))
        })
    }
}

/// Diff paths between two snapshots that the mask does not cover.
pub fn detect_side_effects(
    initial: &Snapshot,
    terminal: &Snapshot,
    mask: &ExpectedChangeMask,
) -> Result<Vec<String>, MetricsError> {
    let d = diff(initial, terminal)?;
    Ok(d.paths().filter(|p| !mask.covers(p)).map(str::to_string).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    #[default]
    None,
    Budget,
    LoopDetect,
}

/// What the harness observed over an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps_used: u32,
    pub truncated_by: Truncation,
    pub declared: Declared,
    /// First step after which the judge reported success.
    pub goal_reached_at: Option<u32>,
}

/// The four reward discounts plus the success flag gating the side-effect
/// discount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Penalties {
    pub goal_success: bool,
    pub clean: bool,
    pub false_complete: bool,
    pub post_success_abort: bool,
    pub overdue: bool,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn side_effect_discount() -> BigRational {
    ratio(4, 5)
}

pub fn false_complete_discount() -> BigRational {
    ratio(4, 5)
}

pub fn post_success_abort_discount() -> BigRational {
    ratio(1, 2)
}

pub fn overdue_discount() -> BigRational {
    ratio(1, 2)
}

/// Progress used for the reward. When the sheet was submitted with a wrong
/// field the bookkeeping check is dropped, so submitting alone earns
/// nothing; with no checks left the progress is zero.
pub fn adjusted_progress(j: &Judgement) -> BigRational {
    let (passed, total) = if j.answer_wrong() {
        let kept: Vec<_> = j.checks.iter().filter(|c| !c.bookkeeping).collect();
        (kept.iter().filter(|c| c.passed).count(), kept.len())
    } else {
        (j.passed, j.total)
    };
    if total == 0 {
        return BigRational::zero();
    }
    ratio(passed as i64, total as i64)
}

/// Shaped reward `p' · 0.8^[success ∧ ¬clean] · 0.8^[FC ∧ p'>0] · 0.5^[PSA] · 0.5^[OT]`.
pub fn reward(p_prime: &BigRational, f: &Penalties) -> Result<BigRational, MetricsError> {
    if p_prime.is_negative() || *p_prime > BigRational::one() {
        return Err(MetricsError::OutOfDomain(format!("p'={p_prime}")));
    }
    let mut r = p_prime.clone();
    if f.goal_success && !f.clean {
        r *= side_effect_discount();
    }
    if f.false_complete && p_prime.is_positive() {
        r *= false_complete_discount();
    }
    if f.post_success_abort {
        r *= post_success_abort_discount();
    }
    if f.overdue {
        r *= overdue_discount();
    }
    Ok(r)
}

/// Rounds half away from zero to `places` decimals.
pub fn format_decimal(r: &BigRational, places: u32) -> String {
    let scale = num_traits::pow(BigInt::from(10), places as usize);
    let scaled = r * BigRational::from_integer(scale.clone());
    let half = ratio(1, 2);
    let n = if scaled.is_negative() { -((-scaled + half).floor()) } else { (scaled + half).floor() }.to_integer();
    let (sign, digits) = (if n.is_negative() { "-" } else { "" }, n.abs().to_string());
    if places == 0 {
        return format!("{sign}{digits}");
    }
    let padded = format!("{digits:0>width$}", width = places as usize + 1);
    let (int, frac) = padded.split_at(padded.len() - places as usize);
    format!("{sign}{int}.{frac}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeVerdict {
    pub template_id: String,
    pub seed: u64,
    pub success: bool,
    pub progress: f64,
    pub false_complete: bool,
    pub overdue: bool,
    pub post_success_abort: bool,
    pub clean: bool,
    pub side_effect_paths: Vec<String>,
    /// Shaped reward, four decimals.
    pub reward: String,
    pub steps_used: u32,
    pub truncated_by: Truncation,
    pub declared: Declared,
}

impl EpisodeVerdict {
    pub fn reward_value(&self) -> f64 {
        self.reward.parse().unwrap_or(0.0)
    }
}

/// Judges the terminal state and derives every episode flag and the reward.
pub fn classify_episode(
    inst: &TaskInstance,
    trace: &EpisodeTrace,
    terminal: &Snapshot,
    mask: &ExpectedChangeMask,
    submission: Option<&serde_json::Value>,
) -> Result<EpisodeVerdict, MetricsError> {
    let j = judge(inst, terminal, submission)?;
    let side_effect_paths = detect_side_effects(&inst.initial_snapshot, terminal, mask)?;
    let success = j.goal_success;
    let reached = trace.goal_reached_at.is_some() || success;
    let flags = Penalties {
        goal_success: success,
        clean: side_effect_paths.is_empty(),
        false_complete: trace.declared == Declared::Complete && !success,
        post_success_abort: reached && trace.declared == Declared::Abort,
        overdue: reached && trace.truncated_by != Truncation::None,
    };
    assert!(!(success && flags.false_complete));
    let r = reward(&adjusted_progress(&j), &flags)?;
    Ok(EpisodeVerdict {
        template_id: inst.template_id.clone(),
        seed: inst.seed,
        success,
        progress: j.progress(),
        false_complete: flags.false_complete,
        overdue: flags.overdue,
        post_success_abort: flags.post_success_abort,
        clean: flags.clean,
        side_effect_paths,
        reward: format_decimal(&r, 4),
        steps_used: trace.steps_used,
        truncated_by: trace.truncated_by,
        declared: trace.declared,
    })
}

/// Converts an exact reward to `f64` for numeric consumers.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
