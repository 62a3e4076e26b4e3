//! Per-app navigation state machines.
//!
//! A [`NavSpec`] declares UI states (route path, search constraints,
//! compound tag), guarded transitions with update operations, and
//! entry-visibility conditions. [`NavCursor`] runs it; [`graph`] analyzes it
//! statically.

mod engine;
pub mod graph;
mod guard;
mod spec;

use thiserror::Error;

pub use engine::{Firing, NavCursor, NavEngine, ProviderCall, ProviderOp, TransitionHost};
pub use graph::{build_graph, enumerate_paths, enumerate_paths_from, validate_spec, Finding, NavGraph};
pub use guard::{GuardContext, GuardExpr, Operand};
pub use spec::{
    Case, FromConstraint, IntentCall, NavSpec, SearchMap, SearchValue, StateDecl, Transition,
    UiStateId, UpdateKind, UpdateOp, UpdateTarget,
};



#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown guard op `{0}`")]
    UnknownGuardOp(String),
    #[error("guard arity: {0}")]
    Arity(String),
    #[error("unknown operand ref `{0}`")]
    UnknownOperandRef(String),
    #[error("unresolved ref `{0}`")]
    UnresolvedRef(String),
    #[error("reference to undeclared state `{0}`")]
    DanglingStateRef(String),
    #[error("transition `{0}`: an `always` case must be the last case")]
    MisplacedFallback(String),
    #[error("state `{0}` declared twice")]
    DuplicateState(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("transition `{transition}` cannot fire from `{state}`")]
    FromConstraintViolated { transition: String, state: String },
    #[error("transition `{0}`: no case matched")]
    NoCaseMatched(String),
    #[error("navigation history is empty")]
    EmptyHistory,
    #[error("unknown goal state `{0}`")]
    UnknownGoalState(String),
    #[error("target state `{state}` needs parameter `{param}`")]
    UnboundParam { state: String, param: String },
    #[error("update `{target}` failed: {reason}")]
    UpdateFailed { target: String, reason: String },
    #[error("host rejected the firing: {0}")]
    Host(String),
}
