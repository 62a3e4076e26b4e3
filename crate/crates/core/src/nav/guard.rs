use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::NavError;
use crate::state::{loose_eq, StateValue};

/// Guard operand.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Literal(StateValue),
    /// Key (slash path) in the app's runtime overlay store.
    AppState(String),
    /// Parameter passed with the firing (or bound on the current state).
    Param(String),
    /// Key (slash path) in the app's data view.
    Data(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuardExpr {
    Always,
    Eq(Operand, Operand),
    /// List-valued data source contains the named parameter.
    MemberOf { source: String, param: String },
    Not(Box<GuardExpr>),
    And(Vec<GuardExpr>),
    Or(Vec<GuardExpr>),
}

/// Evaluation context for guards.
#[derive(Debug, Clone, Copy)]
pub struct GuardContext<'a> {
    pub app_state: &'a StateValue,
    pub params: &'a BTreeMap<String, StateValue>,
    pub data: &'a StateValue,
}

impl Operand {
    pub fn parse(raw: &Value) -> Result<Operand, NavError> {
        let Value::Object(map) = raw else {
            return Ok(Operand::Literal(raw.clone()));
        };
        let Some(kind) = map.get("ref") else {
            return Ok(Operand::Literal(raw.clone()));
        };
        let field = |name: &str| -> Result<String, NavError> {
            map.get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| NavError::Arity(format!("operand ref {kind} needs `{name}`")))
        };
        match kind.as_str() {
            Some("appState") => Ok(Operand::AppState(field("key")?)),
            Some("param") => Ok(Operand::Param(field("name")?)),
            Some("data") => Ok(Operand::Data(field("key")?)),
            _ => Err(NavError::UnknownOperandRef(kind.to_string())),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Operand::Literal(v) => v.clone(),
            Operand::AppState(k) => serde_json::json!({"ref": "appState", "key": k}),
            Operand::Param(n) => serde_json::json!({"ref": "param", "name": n}),
            Operand::Data(k) => serde_json::json!({"ref": "data", "key": k}),
        }
    }

    pub fn resolve(&self, ctx: &GuardContext<'_>) -> Result<StateValue, NavError> {
        match self {
            Operand::Literal(v) => Ok(v.clone()),
            Operand::AppState(key) => lookup_key(ctx.app_state, key)
                .cloned()
                .ok_or_else(|| NavError::UnresolvedRef(format!("appState.{key}"))),
            Operand::Param(name) => ctx
                .params
                .get(name)
                .cloned()
                .ok_or_else(|| NavError::UnresolvedRef(format!("param.{name}"))),
            Operand::Data(key) => lookup_key(ctx.data, key)
                .or_else(|| lookup_key(ctx.app_state, key))
                .cloned()
                .ok_or_else(|| NavError::UnresolvedRef(format!("data.{key}"))),
        }
    }

    /// Stable key used for declared value domains, e.g. `appState:isFollowing`.
    pub fn domain_key(&self) -> Option<String> {
        match self {
            Operand::Literal(_) => None,
            Operand::AppState(k) => Some(format!("appState:{k}")),
            Operand::Param(n) => Some(format!("param:{n}")),
            Operand::Data(k) => Some(format!("data:{k}")),
        }
    }
}

pub(crate) fn lookup_key<'v>(root: &'v StateValue, key: &str) -> Option<&'v StateValue> {
    let segs: Vec<String> = key.split('/').map(str::to_string).collect();
    crate::state::lookup(root, &segs)
}

const GUARD_FIELDS: [&str; 6] = ["left", "right", "ref", "param", "arg", "args"];

impl GuardExpr {
    pub fn parse(raw: &Value) -> Result<GuardExpr, NavError> {
        let Value::Object(map) = raw else {
            return Err(NavError::Arity(format!("guard must be an object, got {raw}")));
        };
        let op = map
            .get("op")
            .and_then(Value::as_str)
            .ok_or_else(|| NavError::Arity("guard without `op`".into()))?;
        let present: Vec<&str> =
            GUARD_FIELDS.iter().copied().filter(|f| map.contains_key(*f)).collect();
        let only = |allowed: &[&str]| -> Result<(), NavError> {
            match present.iter().find(|f| !allowed.contains(f)) {
                Some(extra) => Err(NavError::Arity(format!("`{op}` does not take `{extra}`"))),
                None => Ok(()),
            }
        };
        let need = |name: &str| -> Result<&Value, NavError> {
            map.get(name)
                .ok_or_else(|| NavError::Arity(format!("`{op}` requires `{name}`")))
        };
        match op {
            "always" => {
                only(&[])?;
                Ok(GuardExpr::Always)
            }
            "eq" => {
                only(&["left", "right"])?;
                Ok(GuardExpr::Eq(Operand::parse(need("left")?)?, Operand::parse(need("right")?)?))
            }
            "memberOf" => {
                only(&["ref", "param"])?;
                let source = need("ref")?
                    .as_str()
                    .ok_or_else(|| NavError::Arity("memberOf `ref` must be a data key".into()))?;
                let param = need("param")?
                    .as_str()
                    .ok_or_else(|| NavError::Arity("memberOf `param` must be a name".into()))?;
                Ok(GuardExpr::MemberOf { source: source.into(), param: param.into() })
            }
            "not" => {
                only(&["arg"])?;
                Ok(GuardExpr::Not(Box::new(GuardExpr::parse(need("arg")?)?)))
            }
            "and" | "or" => {
                only(&["args"])?;
                let args = need("args")?
                    .as_array()
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| NavError::Arity(format!("`{op}` needs a nonempty `args` list")))?
                    .iter()
                    .map(GuardExpr::parse)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(if op == "and" { GuardExpr::And(args) } else { GuardExpr::Or(args) })
            }
            other => Err(NavError::UnknownGuardOp(other.to_string())),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        match self {
            GuardExpr::Always => {
                m.insert("op".into(), "always".into());
            }
            GuardExpr::Eq(l, r) => {
                m.insert("op".into(), "eq".into());
                m.insert("left".into(), l.to_json());
                m.insert("right".into(), r.to_json());
            }
            GuardExpr::MemberOf { source, param } => {
                m.insert("op".into(), "memberOf".into());
                m.insert("ref".into(), source.clone().into());
                m.insert("param".into(), param.clone().into());
            }
            GuardExpr::Not(g) => {
                m.insert("op".into(), "not".into());
                m.insert("arg".into(), g.to_json());
            }
            GuardExpr::And(gs) | GuardExpr::Or(gs) => {
                let op = if matches!(self, GuardExpr::And(_)) { "and" } else { "or" };
                m.insert("op".into(), op.into());
                m.insert("args".into(), gs.iter().map(GuardExpr::to_json).collect());
            }
        }
        Value::Object(m)
    }

    pub fn is_always(&self) -> bool {
        matches!(self, GuardExpr::Always)
    }

    /// Evaluates the guard. Pure: reads the context, never writes.
    pub fn eval(&self, ctx: &GuardContext<'_>) -> Result<bool, NavError> {
        match self {
            GuardExpr::Always => Ok(true),
            GuardExpr::Eq(l, r) => Ok(loose_eq(&l.resolve(ctx)?, &r.resolve(ctx)?)),
            GuardExpr::MemberOf { source, param } => {
                let list = Operand::Data(source.clone()).resolve(ctx)?;
                let Value::Array(items) = list else {
                    return Err(NavError::UnresolvedRef(format!("data.{source} is not a list")));
                };
                let needle = Operand::Param(param.clone()).resolve(ctx)?;
                Ok(items.iter().any(|item| loose_eq(item, &needle)))
            }
            GuardExpr::Not(g) => Ok(!g.eval(ctx)?),
            GuardExpr::And(gs) => {
                for g in gs {
                    if !g.eval(ctx)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            GuardExpr::Or(gs) => {
                for g in gs {
                    if g.eval(ctx)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    /// Three-valued evaluation: `None` when the outcome depends on a ref
    /// not bound in `assignment`.
    pub fn fold(&self, assignment: &BTreeMap<String, StateValue>) -> Option<bool> {
        let operand = |o: &Operand| -> Option<StateValue> {
            match o {
                Operand::Literal(v) => Some(v.clone()),
                other => assignment.get(&other.domain_key()?).cloned(),
            }
        };
        match self {
            GuardExpr::Always => Some(true),
            GuardExpr::Eq(l, r) => Some(loose_eq(&operand(l)?, &operand(r)?)),
            GuardExpr::MemberOf { source, param } => {
                let list = assignment.get(&format!("data:{source}"))?;
                let needle = assignment.get(&format!("param:{param}"))?;
                Some(list.as_array()?.iter().any(|i| loose_eq(i, needle)))
            }
            GuardExpr::Not(g) => g.fold(assignment).map(|b| !b),
            GuardExpr::And(gs) => {
                let mut unknown = false;
                for g in gs {
                    match g.fold(assignment) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown { None } else { Some(true) }
            }
            GuardExpr::Or(gs) => {
                let mut unknown = false;
                for g in gs {
                    match g.fold(assignment) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown { None } else { Some(false) }
            }
        }
    }

    /// Domain keys of every ref the guard reads.
    pub fn refs(&self, out: &mut Vec<String>) {
        match self {
            GuardExpr::Always => {}
            GuardExpr::Eq(l, r) => out.extend(l.domain_key().into_iter().chain(r.domain_key())),
            GuardExpr::MemberOf { source, param } => {
                out.push(format!("data:{source}"));
                out.push(format!("param:{param}"));
            }
            GuardExpr::Not(g) => g.refs(out),
            GuardExpr::And(gs) | GuardExpr::Or(gs) => gs.iter().for_each(|g| g.refs(out)),
        }
    }
}
