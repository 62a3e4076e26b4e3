//! Structural diff between snapshots.
//!
//! Scalars are reported at leaf paths. A key or array element present on
//! only one side is reported once, as a whole subtree. Arrays are compared
//! index by index; extra trailing elements become `added`/`removed`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::path::{cmp_segments, lookup_mut, parse_index, write_at};
use super::snapshot::Snapshot;
use super::{StateError, StatePath, StateValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    Added,
    Removed,
    Changed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub path: String,
    pub kind: DiffKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<StateValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<StateValue>,
}

/// Entries sorted bytewise by path. Serializes as a bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDiff {
    pub entries: Vec<DiffEntry>,
}

impl StateDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.path.as_str())
    }
}

pub fn diff(a: &Snapshot, b: &Snapshot) -> Result<StateDiff, StateError> {
    let ids_a: Vec<&str> = a.store_ids().collect();
    let ids_b: Vec<&str> = b.store_ids().collect();
    if ids_a != ids_b {
        return Err(StateError::StoreSetMismatch(format!("{ids_a:?} vs {ids_b:?}")));
    }
    let mut entries = Vec::new();
    for id in ids_a {
        let root = StatePath::root(id);
        diff_into(&root, a.store(id).unwrap(), b.store(id).unwrap(), &mut entries);
    }
    entries.sort_by(|x, y| x.path.as_bytes().cmp(y.path.as_bytes()));
    Ok(StateDiff { entries })
}

/// Diff of two bare values rooted at `root`.
pub fn diff_values(root: &StatePath, a: &StateValue, b: &StateValue) -> StateDiff {
    let mut entries = Vec::new();
    diff_into(root, a, b, &mut entries);
    entries.sort_by(|x, y| x.path.as_bytes().cmp(y.path.as_bytes()));
    StateDiff { entries }
}

fn diff_into(at: &StatePath, a: &StateValue, b: &StateValue, out: &mut Vec<DiffEntry>) {
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            for (k, va) in ma {
                match mb.get(k) {
                    Some(vb) => diff_into(&at.child(k.clone()), va, vb, out),
                    None => out.push(removed(at.child(k.clone()), va)),
                }
            }
            for (k, vb) in mb {
                if !ma.contains_key(k) {
                    out.push(added(at.child(k.clone()), vb));
                }
            }
        }
        (Value::Array(xa), Value::Array(xb)) => {
            for i in 0..xa.len().max(xb.len()) {
                let p = at.child(i.to_string());
                match (xa.get(i), xb.get(i)) {
                    (Some(va), Some(vb)) => diff_into(&p, va, vb, out),
                    (Some(va), None) => out.push(removed(p, va)),
                    (None, Some(vb)) => out.push(added(p, vb)),
                    (None, None) => unreachable!(),
                }
            }
        }
        _ => {
            if a != b {
                out.push(DiffEntry {
                    path: at.to_string(),
                    kind: DiffKind::Changed,
                    before: Some(a.clone()),
                    after: Some(b.clone()),
                });
            }
        }
    }
}

fn added(p: StatePath, v: &StateValue) -> DiffEntry {
    DiffEntry { path: p.to_string(), kind: DiffKind::Added, before: None, after: Some(v.clone()) }
}

fn removed(p: StatePath, v: &StateValue) -> DiffEntry {
    DiffEntry { path: p.to_string(), kind: DiffKind::Removed, before: Some(v.clone()), after: None }
}

/// Applies `d` to `a`, producing the snapshot the diff was taken against.
///
/// Order matters for arrays: changes first, then removals from the highest
/// index down, then additions from the lowest index up.
pub fn apply_diff(a: &Snapshot, d: &StateDiff) -> Result<Snapshot, StateError> {
    let mut stores: BTreeMap<String, StateValue> =
        a.store_ids().map(|id| (id.to_string(), a.store(id).unwrap().clone())).collect();

    let mut parsed: Vec<(StatePath, &DiffEntry)> = d
        .entries
        .iter()
        .map(|e| StatePath::parse(&e.path).map(|p| (p, e)))
        .collect::<Result<_, _>>()?;

    let conflict = |p: &StatePath| StateError::PatchConflict(p.to_string());
    let by_kind = |k: DiffKind| move |(_, e): &&(StatePath, &DiffEntry)| e.kind == k;

    for (p, e) in parsed.iter().filter(by_kind(DiffKind::Changed)) {
        let root = stores.get_mut(&p.store).ok_or_else(|| conflict(p))?;
        let slot = lookup_mut(root, &p.segments, &|| p.to_string())?;
        if e.before.as_ref() != Some(slot) {
            return Err(conflict(p));
        }
        *slot = e.after.clone().ok_or_else(|| conflict(p))?;
    }

    parsed.sort_by(|(x, _), (y, _)| cmp_segments(&x.segments, &y.segments));
    for (p, _) in parsed.iter().rev().filter(by_kind(DiffKind::Removed)) {
        let root = stores.get_mut(&p.store).ok_or_else(|| conflict(p))?;
        let (last, parents) = p.segments.split_last().ok_or_else(|| conflict(p))?;
        match lookup_mut(root, parents, &|| p.to_string())? {
            Value::Object(map) => {
                map.remove(last).ok_or_else(|| conflict(p))?;
            }
            Value::Array(items) => {
                let idx = parse_index(last).ok_or_else(|| conflict(p))?;
                if idx + 1 != items.len() {
                    return Err(conflict(p));
                }
                items.pop();
            }
            _ => return Err(conflict(p)),
        }
    }
    for (p, e) in parsed.iter().filter(by_kind(DiffKind::Added)) {
        let root = stores.get_mut(&p.store).ok_or_else(|| conflict(p))?;
        let (last, parents) = p.segments.split_last().ok_or_else(|| conflict(p))?;
        let value = e.after.clone().ok_or_else(|| conflict(p))?;
        match lookup_mut(root, parents, &|| p.to_string())? {
            Value::Array(items) => {
                if parse_index(last) != Some(items.len()) {
                    return Err(conflict(p));
                }
                items.push(value);
            }
            Value::Object(map) if !map.contains_key(last) => {
                write_at(root, &p.segments, value, &|| p.to_string())?;
            }
            _ => return Err(conflict(p)),
        }
    }

    let stores = stores.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
    Ok(Snapshot::from_parts(a.version(), stores))
}
