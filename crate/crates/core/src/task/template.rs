use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TaskError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    S1,
    S2,
    S3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Operate,
    Query,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Atomic,
    Sequential,
    Transfer,
    DeepDive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Nav,
    Settings,
    Search,
    Create,
    Edit,
    Delete,
    Social,
    Extract,
    Handoff,
    Finance,
    Reasoning,
    Explore,
    Image,
}

macro_rules! label {
    ($t:ty) => {
        impl $t {
            pub fn label(&self) -> String {
                serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
            }
        }
    };
}
label!(Split);
label!(Scope);
label!(Objective);
label!(Composition);
label!(Tag);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    /// The value at the path.
    #[default]
    Value,
    /// Number of elements of the list or map at the path.
    Count,
    /// List of `field` taken from every element, in key order.
    Collect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlotSpec {
    CuratedSet {
        values: Vec<Value>,
    },
    NumericRange {
        lo: i64,
        hi: i64,
        step: i64,
    },
    /// Read from the configured environment; `path` may contain `{slot}`.
    StateQuery {
        path: String,
        #[serde(default)]
        reduce: Reduce,
        #[serde(default)]
        field: Option<String>,
    },
}

impl SlotSpec {
    /// Finite domain of a sampled slot; `None` for state queries.
    pub fn domain(&self) -> Option<Vec<Value>> {
        match self {
            SlotSpec::CuratedSet { values } => Some(values.clone()),
            SlotSpec::NumericRange { lo, hi, step } => {
                Some((0..=(hi - lo) / step).map(|k| Value::from(lo + k * step)).collect())
            }
            SlotSpec::StateQuery { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectOp {
    #[default]
    Set,
    Append,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub path: String,
    pub value: Value,
    #[serde(default)]
    pub op: InjectOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOp {
    Equals,
    Contains,
    Exists,
    Absent,
    CountEq,
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub path: String,
    pub op: CheckOp,
    #[serde(default)]
    pub expected: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalCheck {
    pub check_id: String,
    pub predicate: Predicate,
    #[serde(default)]
    pub bookkeeping: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    Choice,
    Number,
    Text,
    Repeatable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Exact,
    Number,
    Date,
    Time,
    Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerField {
    pub field_id: String,
    pub field_type: FieldType,
    pub matcher: Matcher,
    pub gold: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<serde_json::Number>,
    pub hint: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
}

impl AnswerField {
    /// What the answer sheet shows: everything but the gold value.
    pub fn public_view(&self) -> Value {
        serde_json::json!({
            "field_id": self.field_id,
            "field_type": self.field_type,
            "hint": self.hint,
            "choices": self.choices,
        })
    }
}

pub const BUDGET_CLASSES: [u32; 4] = [15, 30, 45, 60];
pub const ANSWER_SHEET_BONUS: u32 = 15;
pub const SUBMITTED_PATH: &str = "answer_sheet/submitted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
    pub template_id: String,
    pub split: Split,
    pub scope: Scope,
    pub objective: Objective,
    pub composition: Composition,
    pub instruction_variants: Vec<String>,
    #[serde(default)]
    pub slots: BTreeMap<String, SlotSpec>,
    #[serde(default)]
    pub env_config: Vec<Injection>,
    pub goal_checks: Vec<GoalCheck>,
    #[serde(default)]
    pub answer_fields: Vec<AnswerField>,
    pub budget_class: u32,
    #[serde(default)]
    pub risk: bool,
    pub tags: Vec<Tag>,
    /// Extra path patterns whose changes are expected, beyond goal paths.
    #[serde(default)]
    pub allow: Vec<String>,
    /// Scripted solution steps used by the oracle agent.
    #[serde(default)]
    pub oracle: Vec<Value>,
}

impl TaskTemplate {
    pub fn parse(bytes: &[u8]) -> Result<TaskTemplate, TaskError> {
        let t: TaskTemplate = serde_json::from_slice(bytes).map_err(|e| TaskError::SchemaViolation(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn step_budget(&self) -> u32 {
        self.budget_class + if self.answer_fields.is_empty() { 0 } else { ANSWER_SHEET_BONUS }
    }

    /// Goal checks plus the implied `answer_sheet.submitted` bookkeeping
    /// check for templates with answer fields.
    pub fn effective_checks(&self) -> Vec<GoalCheck> {
        let mut checks = self.goal_checks.clone();
        if !self.answer_fields.is_empty() && !checks.iter().any(|c| c.bookkeeping) {
            checks.push(GoalCheck {
                check_id: "answer_sheet.submitted".into(),
                predicate: Predicate { path: SUBMITTED_PATH.into(), op: CheckOp::Equals, expected: Value::Bool(true) },
                bookkeeping: true,
            });
        }
        checks
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let id = &self.template_id;
        let bad = |msg: String| Err(TaskError::SchemaViolation(format!("{id}: {msg}")));
        if id.is_empty() {
            return bad("empty template_id".into());
        }
        if self.instruction_variants.is_empty() {
            return bad("no instruction variants".into());
        }
        let asks = matches!(self.objective, Objective::Query | Objective::Hybrid);
        if asks == self.answer_fields.is_empty() {
            return bad("query and hybrid templates need answer fields; operate templates must not have them".into());
        }
        if !BUDGET_CLASSES.contains(&self.budget_class) {
            return bad(format!("budget_class {} not in {BUDGET_CLASSES:?}", self.budget_class));
        }
        if self.tags.is_empty() || self.tags.len() > 4 || self.tags.iter().collect::<BTreeSet<_>>().len() != self.tags.len() {
            return bad("needs 1 to 4 distinct tags".into());
        }
        if self.goal_checks.is_empty() && self.answer_fields.is_empty() {
            return bad("no goal checks".into());
        }
        let mut seen = BTreeSet::new();
        for c in &self.goal_checks {
            if !seen.insert(&c.check_id) {
                return bad(format!("duplicate check {}", c.check_id));
            }
            if c.bookkeeping && c.predicate.path != SUBMITTED_PATH {
                return bad(format!("check {} is bookkeeping but does not target {SUBMITTED_PATH}", c.check_id));
            }
        }
        for (name, s) in &self.slots {
            match s {
                SlotSpec::CuratedSet { values } if values.is_empty() => return bad(format!("slot {name}: empty set")),
                SlotSpec::NumericRange { lo, hi, step } if lo > hi || *step <= 0 => {
                    return bad(format!("slot {name}: bad range"))
                }
                SlotSpec::StateQuery { reduce: Reduce::Collect, field: None, .. } => {
                    return bad(format!("slot {name}: collect needs `field`"))
                }
                _ => {}
            }
        }
        let mut fields = BTreeSet::new();
        for f in &self.answer_fields {
            if !fields.insert(&f.field_id) {
                return bad(format!("duplicate field {}", f.field_id));
            }
            let ok = match f.field_type {
                FieldType::Choice => f.matcher == Matcher::Exact && !f.choices.is_empty(),
                FieldType::Number => f.matcher == Matcher::Number,
                FieldType::Text => matches!(f.matcher, Matcher::Exact | Matcher::Date | Matcher::Time | Matcher::Duration),
                FieldType::Repeatable => true,
            };
            if !ok {
                return bad(format!("field {}: matcher {:?} does not fit type {:?}", f.field_id, f.matcher, f.field_type));
            }
            if let Some(t) = &f.tolerance {
                if f.matcher != Matcher::Number || t.as_f64().is_none_or(|t| t < 0.0) {
                    return bad(format!("field {}: tolerance must be a non-negative number on a number field", f.field_id));
                }
            }
        }
        Ok(())
    }
}
