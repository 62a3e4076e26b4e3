use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use super::guard::{GuardContext, Operand};
use super::spec::{bind_segments, NavSpec, UiStateId, UpdateKind, UpdateOp, UpdateTarget};
use super::NavError;
use crate::state::{display_text, loose_eq, parse_index, StateValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderOp {
    Create,
    Update,
    Delete,
}

/// Content-provider mutation requested by a transition's update list.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderCall {
    pub provider: String,
    pub op: ProviderOp,
    pub id: Option<String>,
    pub record: Option<StateValue>,
}

/// Environment seen by a firing: the app's overlay, its data view, and a
/// sink for the results. `commit` must apply everything or nothing.
pub trait TransitionHost {
    fn app_state(&self) -> StateValue;
    fn data(&self) -> StateValue;
    fn commit(&mut self, app_state: Option<StateValue>, calls: Vec<ProviderCall>) -> Result<(), NavError>;
}

/// What a successful firing did beyond moving the cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct Firing {
    pub transition: String,
    pub from: UiStateId,
    pub to: UiStateId,
    pub case: Option<usize>,
    /// Resolved intent: type, payload, result slot.
    pub intent: Option<(String, StateValue, Option<String>)>,
    pub result: Option<StateValue>,
}

/// Current UI state plus a linear history of earlier states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavCursor {
    pub current: UiStateId,
    #[serde(default)]
    pub history: Vec<UiStateId>,
}

impl NavCursor {
    pub fn new(spec: &NavSpec) -> Self {
        Self { current: spec.initial(), history: Vec::new() }
    }

    pub fn at(state: UiStateId) -> Self {
        Self { current: state, history: Vec::new() }
    }

    /// `go(transition_id, params)`.
    pub fn fire(
        &mut self,
        spec: &NavSpec,
        transition_id: &str,
        go_params: &BTreeMap<String, StateValue>,
        host: &mut dyn TransitionHost,
    ) -> Result<Firing, NavError> {
        let t = spec
            .transition(transition_id)
            .ok_or_else(|| NavError::UnknownTransition(transition_id.to_string()))?;
        let current = spec
            .state(&self.current.state)
            .ok_or_else(|| NavError::DanglingStateRef(self.current.state.clone()))?;
        if let Some(from) = &t.from {
            if !from.admits(current) {
                return Err(NavError::FromConstraintViolated {
                    transition: t.id.clone(),
                    state: spec.route(&self.current),
                });
            }
        }

        let mut params: BTreeMap<String, StateValue> = self
            .current
            .params
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        params.extend(go_params.iter().map(|(k, v)| (k.clone(), v.clone())));

        let app_state = host.app_state();
        let data = host.data();
        let ctx = GuardContext { app_state: &app_state, params: &params, data: &data };

        let (case, target) = if t.cases.is_empty() {
            (None, self.current.clone())
        } else {
            let mut chosen = None;
            for (i, c) in t.cases.iter().enumerate() {
                if c.when.eval(&ctx)? {
                    chosen = Some(i);
                    break;
                }
            }
            let i = chosen.ok_or_else(|| NavError::NoCaseMatched(t.id.clone()))?;
            let decl = &spec.states[t.cases[i].to];
            let mut ui = UiStateId::new(decl.name.clone());
            for name in decl.path_params() {
                let v = params.get(name).ok_or_else(|| NavError::UnboundParam {
                    state: decl.name.clone(),
                    param: name.to_string(),
                })?;
                ui.params.insert(name.to_string(), display_text(v));
            }
            (Some(i), ui)
        };

        let mut working = app_state.clone();
        let mut calls = Vec::new();
        for u in &t.updates {
            apply_update(u, &ctx, &params, &mut working, &mut calls)?;
        }
        let intent = t
            .intent
            .as_ref()
            .map(|i| Ok::<_, NavError>((i.intent_type.clone(), resolve_tree(&i.payload, &ctx)?, i.result_slot.clone())))
            .transpose()?;
        let result = t.result.as_ref().map(|r| resolve_tree(r, &ctx)).transpose()?;

        let changed = (working != app_state).then_some(working);
        if changed.is_some() || !calls.is_empty() {
            host.commit(changed, calls)?;
        }

        let from = self.current.clone();
        if target != self.current {
            self.history.push(std::mem::replace(&mut self.current, target.clone()));
        }
        Ok(Firing { transition: t.id.clone(), from, to: target, case, intent, result })
    }

    /// Pops one history entry. No updates run.
    pub fn back(&mut self) -> Result<UiStateId, NavError> {
        let prev = self.history.pop().ok_or(NavError::EmptyHistory)?;
        self.current = prev;
        Ok(self.current.clone())
    }
}

/// Replaces every `{"ref": ...}` object in a value tree by its resolution.
pub(crate) fn resolve_tree(v: &Value, ctx: &GuardContext<'_>) -> Result<StateValue, NavError> {
    match v {
        Value::Object(map) if map.contains_key("ref") => Operand::parse(v)?.resolve(ctx),
        Value::Object(map) => {
            let mut out = Map::new();
            for (k, x) in map {
                out.insert(k.clone(), resolve_tree(x, ctx)?);
            }
            Ok(Value::Object(out))
        }
        Value::Array(items) => items.iter().map(|x| resolve_tree(x, ctx)).collect::<Result<_, _>>().map(Value::Array),
        other => Ok(other.clone()),
    }
}

fn apply_update(
    u: &UpdateOp,
    ctx: &GuardContext<'_>,
    params: &BTreeMap<String, StateValue>,
    working: &mut StateValue,
    calls: &mut Vec<ProviderCall>,
) -> Result<(), NavError> {
    let value = u.value.as_ref().map(|v| resolve_tree(v, ctx)).transpose()?;
    match &u.target {
        UpdateTarget::Content { provider, record } => {
            let id = record
                .as_ref()
                .map(|r| bind_segments(std::slice::from_ref(r), params).map(|mut v| v.remove(0)))
                .transpose()?;
            let fail = |reason: &str| NavError::UpdateFailed {
                target: format!("content://{provider}"),
                reason: reason.to_string(),
            };
            let op = match (u.op, id.is_some()) {
                (UpdateKind::Insert, false) => ProviderOp::Create,
                (UpdateKind::Set, true) => ProviderOp::Update,
                (UpdateKind::Remove, true) => ProviderOp::Delete,
                _ => return Err(fail("unsupported provider operation")),
            };
            if op != ProviderOp::Delete && value.is_none() {
                return Err(fail("missing record value"));
            }
            calls.push(ProviderCall { provider: provider.clone(), op, id, record: value });
            Ok(())
        }
        UpdateTarget::Overlay(segs) => {
            let segs = bind_segments(segs, params)?;
            let label = segs.join("/");
            let fail = |reason: &str| NavError::UpdateFailed { target: label.clone(), reason: reason.to_string() };
            let (last, parents) = segs.split_last().expect("overlay targets are nonempty");
            let parent = descend_creating(working, parents).map_err(|r| fail(&r))?;
            match u.op {
                UpdateKind::Set => {
                    let v = value.ok_or_else(|| fail("set needs a value"))?;
                    put(parent, last, v).map_err(|r| fail(&r))
                }
                UpdateKind::Insert => {
                    let v = value.ok_or_else(|| fail("insert needs a value"))?;
                    match child_mut(parent, last) {
                        Some(Value::Array(items)) => {
                            items.push(v);
                            Ok(())
                        }
                        Some(_) => Err(fail("insert target is not a list")),
                        None => put(parent, last, Value::Array(vec![v])).map_err(|r| fail(&r)),
                    }
                }
                UpdateKind::Remove => match value {
                    Some(v) => match child_mut(parent, last) {
                        Some(Value::Array(items)) => {
                            items.retain(|x| !loose_eq(x, &v));
                            Ok(())
                        }
                        _ => Err(fail("remove-by-value target is not a list")),
                    },
                    None => match parent {
                        Value::Object(map) => {
                            map.remove(last).map(|_| ()).ok_or_else(|| fail("no such key"))
                        }
                        Value::Array(items) => match parse_index(last) {
                            Some(i) if i < items.len() => {
                                items.remove(i);
                                Ok(())
                            }
                            _ => Err(fail("index out of range")),
                        },
                        _ => Err(fail("remove target parent is not a container")),
                    },
                },
                UpdateKind::Increment => {
                    let by = value.unwrap_or_else(|| Value::from(1));
                    let cur = child_mut(parent, last).cloned().unwrap_or_else(|| Value::from(0));
                    let sum = add_numbers(&cur, &by).ok_or_else(|| fail("increment needs numbers"))?;
                    put(parent, last, sum).map_err(|r| fail(&r))
                }
            }
        }
    }
}

fn child_mut<'v>(parent: &'v mut StateValue, seg: &str) -> Option<&'v mut StateValue> {
    match parent {
        Value::Object(map) => map.get_mut(seg),
        Value::Array(items) => items.get_mut(parse_index(seg)?),
        _ => None,
    }
}

/// Walks `segs`, creating empty maps for missing keys.
fn descend_creating<'v>(mut at: &'v mut StateValue, segs: &[String]) -> Result<&'v mut StateValue, String> {
    for seg in segs {
        at = match at {
            Value::Object(map) => map.entry(seg.clone()).or_insert_with(|| Value::Object(Map::new())),
            Value::Array(items) => {
                let i = parse_index(seg).ok_or_else(|| format!("`{seg}` is not an index"))?;
                items.get_mut(i).ok_or_else(|| format!("index {i} out of range"))?
            }
            _ => return Err(format!("cannot descend into a scalar at `{seg}`")),
        };
    }
    Ok(at)
}

fn put(parent: &mut StateValue, seg: &str, v: StateValue) -> Result<(), String> {
    match parent {
        Value::Object(map) => {
            map.insert(seg.to_string(), v);
            Ok(())
        }
        Value::Array(items) => {
            let i = parse_index(seg).ok_or_else(|| format!("`{seg}` is not an index"))?;
            let slot = items.get_mut(i).ok_or_else(|| format!("index {i} out of range"))?;
            *slot = v;
            Ok(())
        }
        _ => Err("cannot write into a scalar".into()),
    }
}

fn add_numbers(a: &StateValue, b: &StateValue) -> Option<StateValue> {
    let (a, b) = (a.as_number()?, b.as_number()?);
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
        if let Some(s) = x.checked_add(y) {
            return Some(Value::from(s));
        }
    }
    Number::from_f64(a.as_f64()? + b.as_f64()?).map(Value::Number)
}

/// Standalone engine: a spec, a cursor, and an in-memory overlay and data
/// view. The OS runtime drives [`NavCursor`] against real stores instead.
#[derive(Debug, Clone)]
pub struct NavEngine {
    pub spec: Arc<NavSpec>,
    pub cursor: NavCursor,
    pub app_state: StateValue,
    pub data: StateValue,
    pub provider_log: Vec<ProviderCall>,
}

struct MemHost<'a> {
    app_state: &'a mut StateValue,
    data: &'a StateValue,
    log: &'a mut Vec<ProviderCall>,
}

impl TransitionHost for MemHost<'_> {
    fn app_state(&self) -> StateValue {
        self.app_state.clone()
    }

    fn data(&self) -> StateValue {
        self.data.clone()
    }

    fn commit(&mut self, app_state: Option<StateValue>, calls: Vec<ProviderCall>) -> Result<(), NavError> {
        if let Some(v) = app_state {
            *self.app_state = v;
        }
        self.log.extend(calls);
        Ok(())
    }
}

impl NavEngine {
    pub fn new(spec: Arc<NavSpec>, app_state: StateValue, data: StateValue) -> Self {
        let cursor = NavCursor::new(&spec);
        Self { spec, cursor, app_state, data, provider_log: Vec::new() }
    }

    pub fn current(&self) -> &UiStateId {
        &self.cursor.current
    }

    pub fn go(&mut self, transition_id: &str, params: &BTreeMap<String, StateValue>) -> Result<UiStateId, NavError> {
        let mut host = MemHost { app_state: &mut self.app_state, data: &self.data, log: &mut self.provider_log };
        self.cursor.fire(&self.spec, transition_id, params, &mut host).map(|f| f.to)
    }

    pub fn back(&mut self) -> Result<UiStateId, NavError> {
        self.cursor.back()
    }

    /// Evaluates a `ui_conditions` entry; absent entries are visible.
    pub fn condition(&self, trigger_id: &str, params: &BTreeMap<String, StateValue>) -> Result<bool, NavError> {
        match self.spec.ui_conditions.get(trigger_id) {
            None => Ok(true),
            Some(g) => g.eval(&GuardContext { app_state: &self.app_state, params, data: &self.data }),
        }
    }
}
