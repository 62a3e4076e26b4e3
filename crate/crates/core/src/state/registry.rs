use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::path::{lookup, write_at};
use super::snapshot::Snapshot;
use super::value::{canonical_serialize, check_depth, DEFAULT_MAX_DEPTH};
use super::{remove_at, StateError, StatePath, StateValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    WorldData,
    RuntimeOverlay,
    OsRuntime,
    Volatile,
}

impl Tier {
    /// Tiers that participate in snapshots.
    pub fn captured(self) -> bool {
        matches!(self, Tier::RuntimeOverlay | Tier::OsRuntime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSpec {
    pub store_id: String,
    pub tier: Tier,
    pub persisted: bool,
    pub initial: StateValue,
    /// World-data store this store overlays, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_of: Option<String>,
}

impl StoreSpec {
    pub fn new(store_id: impl Into<String>, tier: Tier, initial: StateValue) -> Self {
        Self {
            store_id: store_id.into(),
            tier,
            persisted: !matches!(tier, Tier::Volatile),
            initial,
            shadow_of: None,
        }
    }

    pub fn persisted(mut self, persisted: bool) -> Self {
        self.persisted = persisted;
        self
    }

    pub fn shadowing(mut self, world_store: impl Into<String>) -> Self {
        self.shadow_of = Some(world_store.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_depth: usize,
    pub max_store_bytes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_depth: DEFAULT_MAX_DEPTH, max_store_bytes: 16 * 1024 * 1024 }
    }
}

/// Opaque handle returned by [`StateRegistry::register`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoreHandle(String);

impl StoreHandle {
    pub fn id(&self) -> &str {
        &self.0
    }

    /// Path string for `rel` (slash-delimited) inside this store.
    pub fn path(&self, rel: &str) -> String {
        if rel.is_empty() {
            self.0.clone()
        } else {
            format!("{}/{}", self.0, rel)
        }
    }
}

#[derive(Debug, Clone)]
struct StoreEntry {
    spec: Arc<StoreSpec>,
    value: Arc<StateValue>,
}

/// Read access shared by live registries and frozen snapshots.
pub trait StateRead {
    /// Raw value at a store-rooted path, without overlay resolution.
    fn read(&self, path: &StatePath) -> Option<&StateValue>;

    fn read_str(&self, path: &str) -> Option<&StateValue> {
        StatePath::parse(path).ok().and_then(|p| self.read(&p))
    }
}

/// Cheap copy of all writable store values, used to roll back a failed
/// multi-store update.
#[derive(Debug, Clone)]
pub struct Checkpoint(BTreeMap<String, Arc<StateValue>>);

/// Registry of layered stores. Single writer; cloning is cheap because
/// values are shared copy-on-write.
#[derive(Debug, Clone)]
pub struct StateRegistry {
    stores: BTreeMap<String, StoreEntry>,
    snapshot_seq: u64,
    limits: Limits,
}

impl Default for StateRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl StateRegistry {
    pub fn new() -> Self {
        Self::with_limits(Limits::default())
    }

    pub fn with_limits(limits: Limits) -> Self {
        Self { stores: BTreeMap::new(), snapshot_seq: 0, limits }
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn register(&mut self, spec: StoreSpec) -> Result<StoreHandle, StateError> {
        if self.stores.contains_key(&spec.store_id) {
            return Err(StateError::DuplicateStoreId(spec.store_id));
        }
        if spec.tier == Tier::Volatile && spec.persisted {
            return Err(StateError::InvalidTierCombination(spec.store_id));
        }
        if spec.store_id.is_empty() || spec.store_id.contains('/') {
            return Err(StateError::InvalidPath(spec.store_id));
        }
        if let Some(target) = &spec.shadow_of {
            let ok = spec.tier != Tier::WorldData
                && self.stores.get(target).is_some_and(|e| e.spec.tier == Tier::WorldData);
            if !ok {
                return Err(StateError::InvalidShadow {
                    store: spec.store_id.clone(),
                    target: target.clone(),
                });
            }
        }
        check_depth(&spec.initial, self.limits.max_depth)?;
        let handle = StoreHandle(spec.store_id.clone());
        let value = Arc::new(spec.initial.clone());
        self.stores.insert(spec.store_id.clone(), StoreEntry { spec: Arc::new(spec), value });
        Ok(handle)
    }

    pub fn contains(&self, store_id: &str) -> bool {
        self.stores.contains_key(store_id)
    }

    pub fn spec(&self, store_id: &str) -> Option<&StoreSpec> {
        self.stores.get(store_id).map(|e| e.spec.as_ref())
    }

    pub fn store_ids(&self) -> impl Iterator<Item = &str> {
        self.stores.keys().map(String::as_str)
    }

    /// Whole value of one store, without overlay resolution.
    pub fn store_value(&self, store_id: &str) -> Result<&StateValue, StateError> {
        self.stores
            .get(store_id)
            .map(|e| e.value.as_ref())
            .ok_or_else(|| StateError::UnknownStore(store_id.to_string()))
    }

    /// Reads `path`. World-data reads are resolved through any overlay
    /// store that declares `shadow_of` for that world store.
    pub fn get(&self, path: &str) -> Result<StateValue, StateError> {
        let p = StatePath::parse(path)?;
        self.get_path(&p)
    }

    pub fn get_path(&self, p: &StatePath) -> Result<StateValue, StateError> {
        let entry = self
            .stores
            .get(&p.store)
            .ok_or_else(|| StateError::UnknownStore(p.store.clone()))?;
        let base = lookup(&entry.value, &p.segments);
        if entry.spec.tier != Tier::WorldData {
            return base.cloned().ok_or_else(|| StateError::UnknownPath(p.to_string()));
        }
        let mut resolved = base.cloned();
        for shadow in self.shadows_of(&p.store) {
            if let Some(over) = lookup(&shadow.value, &p.segments) {
                resolved = Some(match resolved {
                    Some(world) => overlay_merge(world, over),
                    None => over.clone(),
                });
            }
        }
        resolved.ok_or_else(|| StateError::UnknownPath(p.to_string()))
    }

    fn shadows_of<'a>(&'a self, world: &'a str) -> impl Iterator<Item = &'a StoreEntry> + 'a {
        self.stores
            .values()
            .filter(move |e| e.spec.shadow_of.as_deref() == Some(world))
    }

    pub fn set(&mut self, path: &str, value: StateValue) -> Result<(), StateError> {
        let p = StatePath::parse(path)?;
        self.set_path(&p, value)
    }

    pub fn set_path(&mut self, p: &StatePath, value: StateValue) -> Result<(), StateError> {
        self.mutate(&p.store, |root, limits| {
            check_depth(&value, limits.max_depth.saturating_sub(p.segments.len()))?;
            write_at(root, &p.segments, value, &|| p.to_string())
        })
    }

    /// Deletes the key or array element at `path`.
    pub fn remove(&mut self, path: &str) -> Result<StateValue, StateError> {
        let p = StatePath::parse(path)?;
        let mut removed = Value::Null;
        self.mutate(&p.store, |root, _| {
            removed = remove_at(root, &p.segments, &|| p.to_string())?;
            Ok(())
        })?;
        Ok(removed)
    }

    /// Replaces a whole store value.
    pub fn replace_store(&mut self, store_id: &str, value: StateValue) -> Result<(), StateError> {
        self.mutate(store_id, |root, limits| {
            check_depth(&value, limits.max_depth)?;
            *root = value;
            Ok(())
        })
    }

    /// Runs `f` on a private copy of the store and commits only on success,
    /// so a failed write never leaves a partial value behind.
    fn mutate<F>(&mut self, store_id: &str, f: F) -> Result<(), StateError>
    where
        F: FnOnce(&mut StateValue, Limits) -> Result<(), StateError>,
    {
        let limits = self.limits;
        let entry = self
            .stores
            .get_mut(store_id)
            .ok_or_else(|| StateError::UnknownStore(store_id.to_string()))?;
        if entry.spec.tier == Tier::WorldData {
            return Err(StateError::WriteToWorldData(store_id.to_string()));
        }
        let mut working = entry.value.as_ref().clone();
        f(&mut working, limits)?;
        let size = canonical_serialize(&working).len();
        if size > limits.max_store_bytes {
            return Err(StateError::ValueTooLarge {
                store: store_id.to_string(),
                size,
                limit: limits.max_store_bytes,
            });
        }
        entry.value = Arc::new(working);
        Ok(())
    }

    pub fn snapshot(&mut self) -> Snapshot {
        self.snapshot_seq += 1;
        let stores = self
            .stores
            .iter()
            .filter(|(_, e)| e.spec.tier.captured())
            .map(|(k, e)| (k.clone(), Arc::clone(&e.value)))
            .collect();
        Snapshot::from_parts(self.snapshot_seq, stores)
    }

    fn captured_ids(&self) -> Vec<&str> {
        self.stores
            .iter()
            .filter(|(_, e)| e.spec.tier.captured())
            .map(|(k, _)| k.as_str())
            .collect()
    }

    fn check_store_set(&self, snap: &Snapshot) -> Result<(), StateError> {
        let ours = self.captured_ids();
        let theirs: Vec<&str> = snap.store_ids().collect();
        if ours != theirs {
            let missing: Vec<&&str> = theirs.iter().filter(|id| !ours.contains(id)).collect();
            let extra: Vec<&&str> = ours.iter().filter(|id| !theirs.contains(id)).collect();
            return Err(StateError::StoreSetMismatch(format!(
                "snapshot-only {missing:?}, registry-only {extra:?}"
            )));
        }
        Ok(())
    }

    /// Restores captured stores from `snap` and resets volatile stores.
    pub fn restore(&mut self, snap: &Snapshot) -> Result<(), StateError> {
        self.check_store_set(snap)?;
        for (id, entry) in self.stores.iter_mut() {
            match entry.spec.tier {
                Tier::RuntimeOverlay | Tier::OsRuntime => {
                    entry.value = Arc::clone(snap.store_arc(id).expect("checked above"));
                }
                Tier::Volatile => entry.value = Arc::new(entry.spec.initial.clone()),
                Tier::WorldData => {}
            }
        }
        self.snapshot_seq = self.snapshot_seq.max(snap.version());
        Ok(())
    }

    /// Independent registry positioned at `snap`. World data is shared.
    pub fn fork(&self, snap: &Snapshot) -> Result<StateRegistry, StateError> {
        let mut child = self.clone();
        child.restore(snap)?;
        Ok(child)
    }

    /// Reinitializes every store with `persisted = false`.
    pub fn reset_unpersisted(&mut self) {
        for entry in self.stores.values_mut() {
            if !entry.spec.persisted && entry.spec.tier != Tier::WorldData {
                entry.value = Arc::new(entry.spec.initial.clone());
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint(
            self.stores
                .iter()
                .filter(|(_, e)| e.spec.tier != Tier::WorldData)
                .map(|(k, e)| (k.clone(), Arc::clone(&e.value)))
                .collect(),
        )
    }

    pub fn rollback(&mut self, cp: Checkpoint) {
        for (id, value) in cp.0 {
            if let Some(entry) = self.stores.get_mut(&id) {
                entry.value = value;
            }
        }
    }

    /// Approximate heap held privately by this registry (world data shared
    /// with other registries is not counted).
    pub fn private_bytes(&self) -> usize {
        self.stores
            .values()
            .filter(|e| Arc::strong_count(&e.value) == 1)
            .map(|e| canonical_serialize(&e.value).len())
            .sum()
    }
}

impl StateRead for StateRegistry {
    fn read(&self, path: &StatePath) -> Option<&StateValue> {
        let entry = self.stores.get(&path.store)?;
        lookup(&entry.value, &path.segments)
    }
}

fn overlay_merge(world: StateValue, over: &StateValue) -> StateValue {
    match (world, over) {
        (Value::Object(mut base), Value::Object(top)) => {
            for (k, v) in top {
                let merged = match base.remove(k) {
                    Some(existing) => overlay_merge(existing, v),
                    None => v.clone(),
                };
                base.insert(k.clone(), merged);
            }
            Value::Object(base)
        }
        (_, top) => top.clone(),
    }
}
