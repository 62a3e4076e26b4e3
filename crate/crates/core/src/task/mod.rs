//! Task templates, seeded instantiation, goal-check judging and difficulty
//! strata.

mod instance;
mod judge;
mod matcher;
mod pack;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::os::OsError;
use crate::state::StateError;

pub use instance::{bind_value, instantiate, TaskInstance};
pub use judge::{eval_check, judge, CheckResult, FieldResult, Judgement};
pub use matcher::{match_field, number_of, parse_decimal, DATE_FORMAT, TIME_FORMAT};
pub use pack::{lint_pack, load_pack, PackManifest, TaskPack};
pub use template::{
    AnswerField, CheckOp, Composition, FieldType, GoalCheck, InjectOp, Injection, Matcher, Objective, Predicate,
    Reduce, Scope, SlotSpec, Split, Tag, TaskTemplate, ANSWER_SHEET_BONUS, BUDGET_CLASSES, SUBMITTED_PATH,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("template `{0}` defined twice")]
    DuplicateTemplate(String),
    #[error("template `{0}` listed in both train and test")]
    SplitOverlap(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("{template}: slot `{slot}` cannot be resolved")]
    UnresolvableSlot { template: String, slot: String },
    #[error("invalid injection path `{0}`")]
    InvalidInjectionPath(String),
    #[error("store sets differ: {0}")]
    StoreSetMismatch(String),
    #[error("field `{field}`: submitted value {got} has the wrong type")]
    TypeMismatch { field: String, got: String },
    #[error("value outside domain: {0}")]
    OutOfDomain(String),
    #[error("pack i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Os(#[from] OsError),
}

impl From<StateError> for TaskError {
    fn from(e: StateError) -> Self {
        match e {
            StateError::StoreSetMismatch(m) => TaskError::StoreSetMismatch(m),
            other => TaskError::Os(OsError::State(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stratum {
    L1,
    L2,
    L3,
    L4,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [Stratum::L1, Stratum::L2, Stratum::L3, Stratum::L4];

    pub fn label(self) -> &'static str {
        match self {
            Stratum::L1 => "L1",
            Stratum::L2 => "L2",
            Stratum::L3 => "L3",
            Stratum::L4 => "L4",
        }
    }
}

/// Difficulty stratum from a task's mean success rate and progress rate,
/// both in percent. The rules are tried in order L1, L2, L3.
pub fn stratify(mean_sr: f64, mean_pr: f64) -> Result<Stratum, TaskError> {
    for (name, v) in [("sr", mean_sr), ("pr", mean_pr)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(TaskError::OutOfDomain(format!("{name}={v}")));
        }
    }
    Ok(if mean_sr >= 75.0 && mean_pr >= 75.0 {
        Stratum::L1
    } else if mean_sr >= 25.0 && mean_pr >= 50.0 {
        Stratum::L2
    } else if mean_sr > 0.0 && mean_pr >= 25.0 {
        Stratum::L3
    } else {
        Stratum::L4
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strata_thresholds() {
        assert_eq!(stratify(80.0, 80.0), Ok(Stratum::L1));
        assert_eq!(stratify(80.0, 60.0), Ok(Stratum::L2));
        assert_eq!(stratify(0.0, 40.0), Ok(Stratum::L4));
        assert_eq!(stratify(10.0, 25.0), Ok(Stratum::L3));
        assert_eq!(stratify(75.0, 75.0), Ok(Stratum::L1));
        assert!(stratify(-1.0, 0.0).is_err());
        assert!(stratify(50.0, f64::NAN).is_err());
    }
}
