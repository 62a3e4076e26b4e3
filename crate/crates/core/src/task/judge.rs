use std::cmp::Ordering;

use serde::Serialize;
use serde_json::Value;

use super::instance::TaskInstance;
use super::matcher::match_field;
use super::template::{CheckOp, GoalCheck};
use super::TaskError;
use crate::os::ANSWER_SHEET_STORE;
use crate::state::{cmp_numbers, loose_eq, subset_match, Snapshot, StateRead, StateValue};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check_id: String,
    pub passed: bool,
    pub bookkeeping: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldResult {
    pub field_id: String,
    pub submitted: Value,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Judgement {
    pub passed: usize,
    pub total: usize,
    pub goal_success: bool,
    pub checks: Vec<CheckResult>,
    pub fields: Vec<FieldResult>,
    pub submitted: bool,
}

impl Judgement {
    pub fn progress(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.passed as f64 / self.total as f64
    }

    pub fn checks_passed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.passed).map(|c| c.check_id.as_str()).collect()
    }

    /// Non-bookkeeping checks all pass, ignoring answer fields.
    pub fn state_goal_met(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.bookkeeping)
    }

    pub fn answer_wrong(&self) -> bool {
        self.submitted && self.fields.iter().any(|f| !f.matched)
    }
}

fn count(v: &StateValue) -> Option<usize> {
    match v {
        Value::Array(a) => Some(a.len()),
        Value::Object(m) => Some(m.len()),
        _ => None,
    }
}

fn order(v: Option<&StateValue>, expected: &Value) -> Option<Ordering> {
    match (v?, expected) {
        (Value::Number(a), Value::Number(b)) => cmp_numbers(a, b),
        _ => None,
    }
}

pub fn eval_check(check: &GoalCheck, state: &impl StateRead) -> bool {
    let p = &check.predicate;
    let v = state.read_str(&p.path);
    let want = &p.expected;
    match p.op {
        CheckOp::Equals => v.is_some_and(|v| loose_eq(v, want)),
        CheckOp::Contains => match v {
            Some(Value::Array(items)) => items.iter().any(|i| subset_match(i, want)),
            Some(Value::Object(m)) => m.values().any(|i| subset_match(i, want)),
            Some(Value::String(s)) => want.as_str().is_some_and(|w| s.contains(w)),
            _ => false,
        },
        CheckOp::Exists => v.is_some_and(|v| !v.is_null()),
        CheckOp::Absent => v.is_none_or(Value::is_null),
        CheckOp::CountEq => v.and_then(count).zip(want.as_u64()).is_some_and(|(n, w)| n as u64 == w),
        CheckOp::Ge => matches!(order(v, want), Some(Ordering::Greater | Ordering::Equal)),
        CheckOp::Le => matches!(order(v, want), Some(Ordering::Less | Ordering::Equal)),
    }
}

/// Judges a terminal state. Without an explicit submission the answer
/// sheet's submitted values in `terminal` are used.
pub fn judge(inst: &TaskInstance, terminal: &Snapshot, submission: Option<&Value>) -> Result<Judgement, TaskError> {
    let want: Vec<&str> = inst.initial_snapshot.store_ids().collect();
    let have: Vec<&str> = terminal.store_ids().collect();
    if want != have {
        return Err(TaskError::StoreSetMismatch(format!("{want:?} vs {have:?}")));
    }
    let checks: Vec<CheckResult> = inst
        .goal_checks
        .iter()
        .map(|c| CheckResult { check_id: c.check_id.clone(), passed: eval_check(c, terminal), bookkeeping: c.bookkeeping })
        .collect();
    let sheet = terminal.read_str(ANSWER_SHEET_STORE);
    let submitted = sheet.and_then(|s| s.get("submitted")).and_then(Value::as_bool).unwrap_or(false);
    let stored = sheet.and_then(|s| s.get("values")).filter(|_| submitted);
    let values = submission.or(stored);
    let fields: Vec<FieldResult> = inst
        .answer_fields
        .iter()
        .map(|f| {
            let got = values.and_then(|v| v.get(&f.field_id)).cloned().unwrap_or(Value::Null);
            let matched = !got.is_null() && match_field(f, &got).unwrap_or(false);
            FieldResult { field_id: f.field_id.clone(), submitted: got, matched }
        })
        .collect();
    let passed = checks.iter().filter(|c| c.passed).count();
    let goal_success = checks.iter().all(|c| c.passed || c.bookkeeping) && fields.iter().all(|f| f.matched);
    Ok(Judgement { passed, total: checks.len(), goal_success, checks, fields, submitted: submitted || submission.is_some() })
}
