use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{Map, Value};

use super::path::lookup;
use super::registry::StateRead;
use super::value::{parse_value, write_canonical, DEFAULT_MAX_DEPTH};
use super::{StateError, StatePath, StateValue};

/// First line of a snapshot file.
pub const SNAPSHOT_HEADER: &str = r#"{"format":"mgk-snapshot","version":1}"#;

/// Immutable capture of the runtime-overlay and OS-runtime stores.
#[derive(Debug, Clone)]
pub struct Snapshot {
    version: u64,
    stores: Arc<BTreeMap<String, Arc<StateValue>>>,
    canonical: Arc<[u8]>,
}

impl PartialEq for Snapshot {
    /// Snapshots are equal when their canonical bytes are; the version
    /// counter is bookkeeping only.
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}

impl Eq for Snapshot {}

impl Snapshot {
    pub(crate) fn from_parts(version: u64, stores: BTreeMap<String, Arc<StateValue>>) -> Self {
        let mut out = Vec::with_capacity(256);
        out.push(b'{');
        for (i, (id, value)) in stores.iter().enumerate() {
            if i > 0 {
                out.push(b',');
            }
            write_canonical(&mut out, &Value::String(id.clone()));
            out.push(b':');
            write_canonical(&mut out, value);
        }
        out.push(b'}');
        Self { version, stores: Arc::new(stores), canonical: out.into() }
    }

    /// Builds a snapshot from a JSON object mapping store id to value.
    pub fn from_value(version: u64, stores: StateValue) -> Result<Self, StateError> {
        let Value::Object(map) = stores else {
            return Err(StateError::Parse("snapshot body must be an object".into()));
        };
        let stores = map.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        Ok(Self::from_parts(version, stores))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn canonical_bytes(&self) -> &[u8] {
        &self.canonical
    }

    pub fn store_ids(&self) -> impl Iterator<Item = &str> {
        self.stores.keys().map(String::as_str)
    }

    pub fn store(&self, id: &str) -> Option<&StateValue> {
        self.stores.get(id).map(|v| v.as_ref())
    }

    pub(crate) fn store_arc(&self, id: &str) -> Option<&Arc<StateValue>> {
        self.stores.get(id)
    }

    /// All stores as one JSON object.
    pub fn to_value(&self) -> StateValue {
        let mut map = Map::new();
        for (k, v) in self.stores.iter() {
            map.insert(k.clone(), v.as_ref().clone());
        }
        Value::Object(map)
    }

    /// Header line, newline, canonical store map.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER.len() + 1 + self.canonical.len());
        out.extend_from_slice(SNAPSHOT_HEADER.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&self.canonical);
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, StateError> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| StateError::Parse("missing snapshot header line".into()))?;
        if &bytes[..split] != SNAPSHOT_HEADER.as_bytes() {
            return Err(StateError::Parse("unrecognized snapshot header".into()));
        }
        // Stores are themselves bounded; the map adds one level.
        let body = parse_value(&bytes[split + 1..], DEFAULT_MAX_DEPTH + 1)?;
        Self::from_value(0, body)
    }
}

impl StateRead for Snapshot {
    fn read(&self, path: &StatePath) -> Option<&StateValue> {
        lookup(self.stores.get(&path.store)?, &path.segments)
    }
}
