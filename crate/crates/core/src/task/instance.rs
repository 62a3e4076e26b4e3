use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::template::{AnswerField, GoalCheck, InjectOp, Reduce, SlotSpec, TaskTemplate};
use super::TaskError;
use crate::os::{write_creating, ANSWER_SHEET_STORE};
use crate::state::{canonical_serialize, display_text, Snapshot, StatePath, StateRegistry, Tier};

/// A template bound to one seed: concrete instruction, checks, answer
/// fields and the configured initial state.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub template: Arc<TaskTemplate>,
    pub template_id: String,
    pub seed: u64,
    pub instruction: String,
    pub bound_slots: BTreeMap<String, Value>,
    pub initial_snapshot: Snapshot,
    pub goal_checks: Vec<GoalCheck>,
    pub answer_fields: Vec<AnswerField>,
    pub step_budget: u32,
    /// Extra allowed change patterns, slot-bound.
    pub allow: Vec<String>,
    /// Oracle script, slot-bound.
    pub oracle: Vec<Value>,
}

impl TaskInstance {
    pub fn to_json(&self, with_snapshot: bool) -> Value {
        let mut v = json!({
            "template_id": self.template_id,
            "seed": self.seed,
            "instruction": self.instruction,
            "bound_slots": self.bound_slots,
            "goal_checks": self.goal_checks,
            "answer_fields": self.answer_fields,
            "step_budget": self.step_budget,
            "allow": self.allow,
        });
        if with_snapshot {
            v["initial_snapshot"] = self.initial_snapshot.to_value();
        }
        v
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_serialize(&self.to_json(true))
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let Some(len) = rest[open + 1..].find('}') else { break };
        out.push(&rest[open + 1..open + 1 + len]);
        rest = &rest[open + 2 + len..];
    }
    out
}

fn bind_text(text: &str, slots: &BTreeMap<String, Value>) -> String {
    let mut out = text.to_string();
    for (name, v) in slots {
        out = out.replace(&format!("{{{name}}}"), &display_text(v));
    }
    out
}

/// Substitutes `{slot}` in every string of `v`. A string that is exactly one
/// placeholder takes the slot value with its JSON type.
pub fn bind_value(v: &Value, slots: &BTreeMap<String, Value>) -> Value {
    match v {
        Value::String(s) => {
            if let Some(name) = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                if let Some(bound) = slots.get(name) {
                    return bound.clone();
                }
            }
            Value::String(bind_text(s, slots))
        }
        Value::Array(items) => Value::Array(items.iter().map(|i| bind_value(i, slots)).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), bind_value(x, slots))).collect()),
        other => other.clone(),
    }
}

fn unbound(text: &str, slots: &BTreeMap<String, Value>, names: &BTreeMap<String, SlotSpec>) -> bool {
    placeholders(text).into_iter().any(|p| names.contains_key(p) && !slots.contains_key(p))
}

fn reduce(v: Value, how: Reduce, field: Option<&str>) -> Option<Value> {
    match how {
        Reduce::Value => Some(v),
        Reduce::Count => match v {
            Value::Array(a) => Some(json!(a.len())),
            Value::Object(m) => Some(json!(m.len())),
            _ => None,
        },
        Reduce::Collect => {
            let field = field?;
            let items: Vec<Value> = match v {
                Value::Array(a) => a,
                Value::Object(m) => m.into_iter().map(|(_, x)| x).collect(),
                _ => return None,
            };
            Some(Value::Array(items.iter().filter_map(|i| i.get(field).cloned()).collect()))
        }
    }
}

fn inject(reg: &mut StateRegistry, path: &str, value: Value, op: InjectOp) -> Result<(), TaskError> {
    let invalid = || TaskError::InvalidInjectionPath(path.to_string());
    let p = StatePath::parse(path).map_err(|_| invalid())?;
    match reg.spec(&p.store).map(|s| s.tier) {
        Some(Tier::RuntimeOverlay | Tier::OsRuntime) => {}
        _ => return Err(invalid()),
    }
    let rel = p.segments.join("/");
    let value = match op {
        InjectOp::Set => value,
        InjectOp::Append => {
            let mut list = match reg.get(path) {
                Ok(Value::Array(a)) => a,
                Ok(_) => return Err(invalid()),
                Err(_) => Vec::new(),
            };
            list.push(value);
            Value::Array(list)
        }
    };
    write_creating(reg, &p.store, &rel, value).map_err(|_| invalid())
}

/// Binds `tpl` for `seed` against a fresh copy of `base`. Draw order: the
/// instruction variant, then sampled slots in name order; injections run
/// next, and state-query slots are read from the injected state.
pub fn instantiate(tpl: &Arc<TaskTemplate>, seed: u64, base: &StateRegistry) -> Result<TaskInstance, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&tpl.template_id));
    let variant = rng.gen_range(0..tpl.instruction_variants.len());
    let mut slots = BTreeMap::new();
    for (name, spec) in &tpl.slots {
        if let Some(domain) = spec.domain() {
            slots.insert(name.clone(), domain[rng.gen_range(0..domain.len())].clone());
        }
    }
    let mut reg = base.clone();
    let unresolvable = |slot: &str| TaskError::UnresolvableSlot { template: tpl.template_id.clone(), slot: slot.to_string() };
    for inj in &tpl.env_config {
        if unbound(&inj.path, &slots, &tpl.slots) || placeholders(&inj.value.to_string()).iter().any(|p| tpl.slots.contains_key(*p) && !slots.contains_key(*p)) {
            let missing = placeholders(&inj.path).into_iter().find(|p| !slots.contains_key(*p)).unwrap_or("?");
            return Err(unresolvable(missing));
        }
        inject(&mut reg, &bind_text(&inj.path, &slots), bind_value(&inj.value, &slots), inj.op)?;
    }
    loop {
        let mut progressed = false;
        let mut pending = None;
        for (name, spec) in &tpl.slots {
            let SlotSpec::StateQuery { path, reduce: how, field } = spec else { continue };
            if slots.contains_key(name) {
                continue;
            }
            if unbound(path, &slots, &tpl.slots) {
                pending = Some(name);
                continue;
            }
            let v = reg
                .get(&bind_text(path, &slots))
                .ok()
                .and_then(|v| reduce(v, *how, field.as_deref()))
                .ok_or_else(|| unresolvable(name))?;
            slots.insert(name.clone(), v);
            progressed = true;
        }
        match pending {
            None => break,
            Some(name) if !progressed => return Err(unresolvable(name)),
            Some(_) => {}
        }
    }
    let answer_fields: Vec<AnswerField> = tpl
        .answer_fields
        .iter()
        .map(|f| AnswerField { gold: bind_value(&f.gold, &slots), hint: bind_text(&f.hint, &slots), ..f.clone() })
        .collect();
    if !answer_fields.is_empty() {
        let views = Value::Array(answer_fields.iter().map(AnswerField::public_view).collect());
        inject(&mut reg, &format!("{ANSWER_SHEET_STORE}/fields"), views, InjectOp::Set)?;
    }
    let goal_checks = tpl
        .effective_checks()
        .into_iter()
        .map(|mut c| {
            c.predicate.path = bind_text(&c.predicate.path, &slots);
            c.predicate.expected = bind_value(&c.predicate.expected, &slots);
            c
        })
        .collect();
    Ok(TaskInstance {
        template: Arc::clone(tpl),
        template_id: tpl.template_id.clone(),
        seed,
        instruction: bind_text(&tpl.instruction_variants[variant], &slots),
        initial_snapshot: reg.snapshot(),
        goal_checks,
        answer_fields,
        step_budget: tpl.step_budget(),
        allow: tpl.allow.iter().map(|a| bind_text(a, &slots)).collect(),
        oracle: tpl.oracle.iter().map(|s| bind_value(s, &slots)).collect(),
        bound_slots: slots,
    })
}
