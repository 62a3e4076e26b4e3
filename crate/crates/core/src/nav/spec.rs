use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::guard::{GuardExpr, Operand};
use super::NavError;
use crate::state::{display_text, StateValue};

/// Value a state's query parameter must take. `Absent` means the key is
/// not present at all.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SearchValue {
    Absent,
    Equals(String),
}

impl SearchValue {
    fn parse(raw: &Value, ctx: &str) -> Result<Self, NavError> {
        match raw {
            Value::Null => Ok(SearchValue::Absent),
            Value::String(s) => Ok(SearchValue::Equals(s.clone())),
            other => Err(NavError::Invalid(format!("{ctx}: search value {other} must be string or null"))),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            SearchValue::Absent => Value::Null,
            SearchValue::Equals(s) => Value::String(s.clone()),
        }
    }
}

pub type SearchMap = BTreeMap<String, SearchValue>;

fn parse_search(raw: &BTreeMap<String, Value>, ctx: &str) -> Result<SearchMap, NavError> {
    raw.iter().map(|(k, v)| Ok((k.clone(), SearchValue::parse(v, ctx)?))).collect()
}

/// Declared UI state: route path template plus search constraints and an
/// optional compound tag (popup, drawer, tab).
#[derive(Debug, Clone, PartialEq)]
pub struct StateDecl {
    pub name: String,
    pub path: String,
    pub search: SearchMap,
    pub compound_tag: Option<String>,
}

impl StateDecl {
    /// `:param` placeholder names in path order.
    pub fn path_params(&self) -> Vec<&str> {
        self.path.split('/').filter_map(|seg| seg.strip_prefix(':')).collect()
    }

    fn identity(&self) -> (String, Vec<(String, String)>, Option<String>) {
        (self.path.clone(), concrete_search(&self.search), self.compound_tag.clone())
    }
}

fn concrete_search(search: &SearchMap) -> Vec<(String, String)> {
    search
        .iter()
        .filter_map(|(k, v)| match v {
            SearchValue::Equals(s) => Some((k.clone(), s.clone())),
            SearchValue::Absent => None,
        })
        .collect()
}

/// Runtime UI state: a declared state with its path parameters bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UiStateId {
    pub state: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl UiStateId {
    pub fn new(state: impl Into<String>) -> Self {
        Self { state: state.into(), params: BTreeMap::new() }
    }

    pub fn with_param(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.params.insert(k.into(), v.into());
        self
    }
}

impl fmt::Display for UiStateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.state)?;
        if !self.params.is_empty() {
            let parts: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(","))?;
        }
        Ok(())
    }
}

/// `from` constraint on a transition.
#[derive(Debug, Clone, PartialEq)]
pub struct FromConstraint {
    pub path: String,
    pub search: SearchMap,
}

impl FromConstraint {
    /// True when `state` satisfies the constraint: same path template, and
    /// every constrained key absent or equal as required.
    pub fn admits(&self, state: &StateDecl) -> bool {
        if state.path != self.path {
            return false;
        }
        self.search.iter().all(|(k, want)| {
            let have = state.search.get(k).cloned().unwrap_or(SearchValue::Absent);
            have == *want
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    /// Index into [`NavSpec::states`].
    pub to: usize,
    pub when: GuardExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Set,
    Insert,
    Remove,
    Increment,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateTarget {
    /// Segment templates below the app's overlay store root; `:name`
    /// segments are replaced by parameters.
    Overlay(Vec<String>),
    /// `content://<provider>[/<record template>]`.
    Content { provider: String, record: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOp {
    pub target: UpdateTarget,
    pub op: UpdateKind,
    /// Value tree; any `{"ref": ...}` object inside is an operand.
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentCall {
    pub intent_type: String,
    pub payload: Value,
    pub result_slot: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: String,
    pub from: Option<FromConstraint>,
    pub cases: Vec<Case>,
    pub updates: Vec<UpdateOp>,
    pub intent: Option<IntentCall>,
    /// Value posted back to a pending `start_for_result` caller.
    pub result: Option<Value>,
    pub permission: Option<String>,
}

/// Parsed navigation specification for one app.
#[derive(Debug, Clone, PartialEq)]
pub struct NavSpec {
    pub app_id: String,
    pub initial_state: usize,
    pub states: Vec<StateDecl>,
    pub transitions: Vec<Transition>,
    pub ui_conditions: BTreeMap<String, GuardExpr>,
    /// Finite value domains for refs, keyed like `appState:isFollowing`.
    pub domains: BTreeMap<String, Vec<StateValue>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    app_id: String,
    initial_state: String,
    states: Vec<RawState>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    #[serde(default)]
    ui_conditions: BTreeMap<String, Value>,
    #[serde(default)]
    domains: BTreeMap<String, Vec<Value>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    name: String,
    path: String,
    #[serde(default)]
    search: BTreeMap<String, Value>,
    #[serde(default)]
    compound_tag: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrom {
    path: String,
    #[serde(default)]
    search: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    to: String,
    #[serde(default)]
    search: Option<BTreeMap<String, Value>>,
    #[serde(default)]
    compound_tag: Option<String>,
    #[serde(default)]
    when: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUpdate {
    target: String,
    op: UpdateKind,
    #[serde(default)]
    value: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntent {
    #[serde(rename = "type")]
    intent_type: String,
    #[serde(default)]
    payload: Value,
    #[serde(default)]
    result_slot: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    id: String,
    #[serde(default)]
    from: Option<RawFrom>,
    #[serde(default)]
    cases: Vec<RawCase>,
    #[serde(default)]
    updates: Vec<RawUpdate>,
    #[serde(default)]
    intent: Option<RawIntent>,
    #[serde(default)]
    result: Option<Value>,
    #[serde(default)]
    permission: Option<String>,
}

/// Checks every `{"ref": ...}` leaf in a value tree.
fn check_value_tree(v: &Value) -> Result<(), NavError> {
    match v {
        Value::Object(map) if map.contains_key("ref") => Operand::parse(v).map(|_| ()),
        Value::Object(map) => map.values().try_for_each(check_value_tree),
        Value::Array(items) => items.iter().try_for_each(check_value_tree),
        _ => Ok(()),
    }
}

impl NavSpec {
    pub fn parse(document: &[u8]) -> Result<NavSpec, NavError> {
        let raw: RawSpec = serde_json::from_slice(document).map_err(|e| NavError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_raw(raw)
    }

    pub fn parse_str(document: &str) -> Result<NavSpec, NavError> {
        Self::parse(document.as_bytes())
    }

    fn from_raw(raw: RawSpec) -> Result<NavSpec, NavError> {
        let mut states: Vec<StateDecl> = Vec::with_capacity(raw.states.len());
        for s in raw.states {
            let decl = StateDecl {
                search: parse_search(&s.search, &s.name)?,
                name: s.name,
                path: s.path,
                compound_tag: s.compound_tag,
            };
            if states.iter().any(|o| o.name == decl.name || o.identity() == decl.identity()) {
                return Err(NavError::DuplicateState(decl.name));
            }
            states.push(decl);
        }
        let initial_state = states
            .iter()
            .position(|s| s.name == raw.initial_state)
            .ok_or_else(|| NavError::DanglingStateRef(raw.initial_state.clone()))?;

        let mut transitions = Vec::with_capacity(raw.transitions.len());
        for t in raw.transitions {
            let from = t
                .from
                .map(|f| {
                    Ok::<_, NavError>(FromConstraint {
                        search: parse_search(&f.search, &t.id)?,
                        path: f.path,
                    })
                })
                .transpose()?;
            let mut cases = Vec::with_capacity(t.cases.len());
            for c in &t.cases {
                let to = resolve_target(&states, c)?;
                let when = match &c.when {
                    Some(g) => GuardExpr::parse(g)?,
                    None => GuardExpr::Always,
                };
                cases.push(Case { to, when });
            }
            if let Some(pos) = cases.iter().position(|c| c.when.is_always()) {
                if pos + 1 != cases.len() {
                    return Err(NavError::MisplacedFallback(t.id));
                }
            }
            let updates = t
                .updates
                .into_iter()
                .map(|u| {
                    if let Some(v) = &u.value {
                        check_value_tree(v)?;
                    }
                    Ok(UpdateOp { target: parse_target(&u.target)?, op: u.op, value: u.value })
                })
                .collect::<Result<Vec<_>, NavError>>()?;
            let intent = t
                .intent
                .map(|i| {
                    check_value_tree(&i.payload)?;
                    Ok::<_, NavError>(IntentCall {
                        intent_type: i.intent_type,
                        payload: i.payload,
                        result_slot: i.result_slot,
                    })
                })
                .transpose()?;
            if let Some(r) = &t.result {
                check_value_tree(r)?;
            }
            transitions.push(Transition {
                id: t.id,
                from,
                cases,
                updates,
                intent,
                result: t.result,
                permission: t.permission,
            });
        }

        let ui_conditions = raw
            .ui_conditions
            .iter()
            .map(|(k, v)| Ok((k.clone(), GuardExpr::parse(v)?)))
            .collect::<Result<_, NavError>>()?;

        Ok(NavSpec {
            app_id: raw.app_id,
            initial_state,
            states,
            transitions,
            ui_conditions,
            domains: raw.domains,
        })
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn state(&self, name: &str) -> Option<&StateDecl> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn initial(&self) -> UiStateId {
        UiStateId::new(self.states[self.initial_state].name.clone())
    }

    /// First transition with `id` (duplicates are reported by validation).
    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    /// Route string for a runtime state, e.g. `/book/60?modal=open`.
    pub fn route(&self, ui: &UiStateId) -> String {
        let Some(decl) = self.state(&ui.state) else {
            return format!("?{}", ui.state);
        };
        let path: Vec<String> = decl
            .path
            .split('/')
            .map(|seg| match seg.strip_prefix(':') {
                Some(name) => ui.params.get(name).cloned().unwrap_or_else(|| seg.to_string()),
                None => seg.to_string(),
            })
            .collect();
        let mut route = path.join("/");
        let query = concrete_search(&decl.search);
        if !query.is_empty() {
            let parts: Vec<String> = query.iter().map(|(k, v)| format!("{k}={v}")).collect();
            route.push('?');
            route.push_str(&parts.join("&"));
        }
        if let Some(tag) = &decl.compound_tag {
            route.push('#');
            route.push_str(tag);
        }
        route
    }

    /// Re-emits the document form.
    pub fn to_json(&self) -> Value {
        let search_json = |s: &SearchMap| -> Value {
            Value::Object(s.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
        };
        let states: Vec<Value> = self
            .states
            .iter()
            .map(|s| {
                serde_json::json!({
                    "name": s.name, "path": s.path, "search": search_json(&s.search),
                    "compound_tag": s.compound_tag,
                })
            })
            .collect();
        let transitions: Vec<Value> = self
            .transitions
            .iter()
            .map(|t| {
                let mut obj = serde_json::Map::new();
                obj.insert("id".into(), t.id.clone().into());
                if let Some(f) = &t.from {
                    obj.insert(
                        "from".into(),
                        serde_json::json!({"path": f.path, "search": search_json(&f.search)}),
                    );
                }
                let cases: Vec<Value> = t
                    .cases
                    .iter()
                    .map(|c| serde_json::json!({"to": self.states[c.to].name, "when": c.when.to_json()}))
                    .collect();
                obj.insert("cases".into(), cases.into());
                Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "app_id": self.app_id,
            "initial_state": self.states[self.initial_state].name,
            "states": states,
            "transitions": transitions,
        })
    }
}

fn resolve_target(states: &[StateDecl], case: &RawCase) -> Result<usize, NavError> {
    if !case.to.starts_with('/') {
        return states
            .iter()
            .position(|s| s.name == case.to)
            .ok_or_else(|| NavError::DanglingStateRef(case.to.clone()));
    }
    let search = parse_search(&case.search.clone().unwrap_or_default(), &case.to)?;
    let want = concrete_search(&search);
    states
        .iter()
        .position(|s| {
            s.path == case.to
                && concrete_search(&s.search) == want
                && (case.compound_tag.is_none() || s.compound_tag == case.compound_tag)
        })
        .ok_or_else(|| {
            let q: Vec<String> = want.iter().map(|(k, v)| format!("{k}={v}")).collect();
            NavError::DanglingStateRef(format!("{}?{}", case.to, q.join("&")))
        })
}

fn parse_target(raw: &str) -> Result<UpdateTarget, NavError> {
    if let Some(rest) = raw.strip_prefix("content://") {
        let mut parts = rest.splitn(2, '/');
        let provider = parts.next().unwrap_or_default();
        if provider.is_empty() {
            return Err(NavError::Invalid(format!("update target `{raw}` names no provider")));
        }
        return Ok(UpdateTarget::Content {
            provider: provider.to_string(),
            record: parts.next().map(str::to_string),
        });
    }
    if raw.is_empty() || raw.split('/').any(str::is_empty) || raw.contains("://") {
        return Err(NavError::Invalid(format!("update target `{raw}` is not an overlay path")));
    }
    Ok(UpdateTarget::Overlay(raw.split('/').map(str::to_string).collect()))
}

/// Substitutes `:name` segments from `params`.
pub(crate) fn bind_segments(
    segs: &[String],
    params: &BTreeMap<String, StateValue>,
) -> Result<Vec<String>, NavError> {
    segs.iter()
        .map(|s| match s.strip_prefix(':') {
            Some(name) => params
                .get(name)
                .map(display_text)
                .ok_or_else(|| NavError::UnresolvedRef(format!("param.{name}"))),
            None => Ok(s.clone()),
        })
        .collect()
}
