//! Content providers backed by `provider.<name>` stores holding
//! `{next_id, records: {id: record}}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::catalog::{provider_store, PROVIDERS};
use super::OsError;
use crate::state::{cmp_segments, StateRegistry, StateValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrudOp {
    Create,
    Read,
    Update,
    Delete,
    List,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderResult {
    Created { id: String, record: StateValue },
    Record(StateValue),
    Updated { id: String },
    Deleted { id: String },
    /// `(id, record)` pairs sorted by numeric id.
    List(Vec<(String, StateValue)>),
}

impl ProviderResult {
    /// Payload of the change notification, if the op mutated anything.
    pub fn notification(&self, op: CrudOp) -> Option<StateValue> {
        match self {
            ProviderResult::Created { id, .. }
            | ProviderResult::Updated { id }
            | ProviderResult::Deleted { id } => Some(json!({"op": op, "id": id})),
            _ => None,
        }
    }
}

fn records_sorted(store: &StateValue) -> Vec<(String, StateValue)> {
    let mut out: Vec<(String, StateValue)> = store
        .get("records")
        .and_then(Value::as_object)
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default();
    out.sort_by(|a, b| cmp_segments(std::slice::from_ref(&a.0), std::slice::from_ref(&b.0)));
    out
}

pub fn list(reg: &StateRegistry, provider: &str) -> Result<Vec<(String, StateValue)>, OsError> {
    Ok(records_sorted(reg.store_value(&provider_store(provider))?))
}

/// Executes one CRUD op against the provider store. Does not notify.
pub fn execute(
    reg: &mut StateRegistry,
    provider: &str,
    op: CrudOp,
    id: Option<&str>,
    record: Option<StateValue>,
) -> Result<ProviderResult, OsError> {
    if !PROVIDERS.contains(&provider) {
        return Err(OsError::UnknownProvider(provider.to_string()));
    }
    let sid = provider_store(provider);
    let mut store = reg.store_value(&sid)?.clone();
    let need_id = || id.map(str::to_string).ok_or_else(|| OsError::MissingRecordId(provider.to_string()));
    let unknown = |id: &str| OsError::UnknownRecord { provider: provider.to_string(), id: id.to_string() };

    let result = match op {
        CrudOp::List => return Ok(ProviderResult::List(records_sorted(&store))),
        CrudOp::Read => {
            let id = need_id()?;
            let r = store.get("records").and_then(|m| m.get(&id)).cloned().ok_or_else(|| unknown(&id))?;
            return Ok(ProviderResult::Record(r));
        }
        CrudOp::Create => {
            let next = store.get("next_id").and_then(Value::as_u64).unwrap_or(1);
            let id = next.to_string();
            let mut rec = record.unwrap_or_else(|| Value::Object(Map::new()));
            if let Value::Object(m) = &mut rec {
                m.insert("id".into(), Value::String(id.clone()));
            }
            records_mut(&mut store).insert(id.clone(), rec.clone());
            store["next_id"] = json!(next + 1);
            ProviderResult::Created { id, record: rec }
        }
        CrudOp::Update => {
            let id = need_id()?;
            let records = records_mut(&mut store);
            let slot = records.get_mut(&id).ok_or_else(|| unknown(&id))?;
            let mut rec = record.unwrap_or_else(|| slot.clone());
            if let Value::Object(m) = &mut rec {
                m.insert("id".into(), Value::String(id.clone()));
            }
            *slot = rec;
            ProviderResult::Updated { id }
        }
        CrudOp::Delete => {
            let id = need_id()?;
            records_mut(&mut store).remove(&id).ok_or_else(|| unknown(&id))?;
            ProviderResult::Deleted { id }
        }
    };
    reg.replace_store(&sid, store)?;
    Ok(result)
}

fn records_mut(store: &mut StateValue) -> &mut Map<String, Value> {
    if !store.get("records").is_some_and(Value::is_object) {
        store["records"] = Value::Object(Map::new());
    }
    store["records"].as_object_mut().expect("just ensured")
}
