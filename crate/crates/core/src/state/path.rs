//! Store-rooted paths: `store_id/seg/seg...`.
//!
//! Segments address object keys or array indices (base-10, non-negative).
//! A literal `/` inside a key is written `~1` and `~` is written `~0`.

use std::cmp::Ordering;
use std::fmt;

use serde_json::Value;

use super::{StateError, StateValue};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StatePath {
    pub store: String,
    pub segments: Vec<String>,
}

impl StatePath {
    pub fn parse(raw: &str) -> Result<Self, StateError> {
        let mut parts = raw.split('/');
        let store = parts.next().unwrap_or_default();
        if store.is_empty() {
            return Err(StateError::InvalidPath(raw.to_string()));
        }
        let mut segments = Vec::new();
        for part in parts {
            if part.is_empty() {
                return Err(StateError::InvalidPath(raw.to_string()));
            }
            segments.push(unescape(part));
        }
        Ok(Self { store: unescape(store), segments })
    }

    pub fn root(store: impl Into<String>) -> Self {
        Self { store: store.into(), segments: Vec::new() }
    }

    pub fn child(&self, segment: impl Into<String>) -> Self {
        let mut segments = self.segments.clone();
        segments.push(segment.into());
        Self { store: self.store.clone(), segments }
    }

    pub fn is_root(&self) -> bool {
        self.segments.is_empty()
    }
}

impl fmt::Display for StatePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&escape(&self.store))?;
        for seg in &self.segments {
            f.write_str("/")?;
            f.write_str(&escape(seg))?;
        }
        Ok(())
    }
}

pub fn escape(segment: &str) -> String {
    if segment.contains(['~', '/']) {
        segment.replace('~', "~0").replace('/', "~1")
    } else {
        segment.to_string()
    }
}

pub fn unescape(segment: &str) -> String {
    if segment.contains('~') {
        segment.replace("~1", "/").replace("~0", "~")
    } else {
        segment.to_string()
    }
}

/// Array index segments: plain base-10 digits, no sign, no leading `+`.
pub fn parse_index(segment: &str) -> Option<usize> {
    if segment.is_empty() || !segment.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    segment.parse().ok()
}

/// Segment ordering where two numeric segments compare as numbers.
pub fn cmp_segments(a: &[String], b: &[String]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = match (parse_index(x), parse_index(y)) {
            (Some(i), Some(j)) => i.cmp(&j),
            _ => x.as_bytes().cmp(y.as_bytes()),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len())
}

/// Resolves `segments` below `value`. `None` when a key or index is missing
/// or a scalar is indexed.
pub fn lookup<'v>(value: &'v StateValue, segments: &[String]) -> Option<&'v StateValue> {
    let mut cur = value;
    for seg in segments {
        cur = match cur {
            Value::Object(map) => map.get(seg)?,
            Value::Array(items) => items.get(parse_index(seg)?)?,
            _ => return None,
        };
    }
    Some(cur)
}

/// Mutable slot for an existing path.
pub fn lookup_mut<'v>(
    value: &'v mut StateValue,
    segments: &[String],
    display: &dyn Fn() -> String,
) -> Result<&'v mut StateValue, StateError> {
    let mut cur = value;
    for seg in segments {
        cur = match cur {
            Value::Object(map) => map
                .get_mut(seg)
                .ok_or_else(|| StateError::UnknownPath(display()))?,
            Value::Array(items) => {
                let idx = parse_index(seg)
                    .ok_or_else(|| StateError::PathTypeMismatch(display()))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| StateError::PathTypeMismatch(display()))?
            }
            _ => return Err(StateError::PathTypeMismatch(display())),
        };
    }
    Ok(cur)
}

/// Writes `new` at `segments` below `root`.
///
/// The parent must already exist. Object parents accept new keys; array
/// parents only accept in-range indices (no implicit append).
pub fn write_at(
    root: &mut StateValue,
    segments: &[String],
    new: StateValue,
    display: &dyn Fn() -> String,
) -> Result<(), StateError> {
    let Some((last, parents)) = segments.split_last() else {
        *root = new;
        return Ok(());
    };
    let parent = lookup_mut(root, parents, display)?;
    match parent {
        Value::Object(map) => {
            map.insert(last.clone(), new);
            Ok(())
        }
        Value::Array(items) => {
            let idx = parse_index(last).ok_or_else(|| StateError::PathTypeMismatch(display()))?;
            let slot = items
                .get_mut(idx)
                .ok_or_else(|| StateError::PathTypeMismatch(display()))?;
            *slot = new;
            Ok(())
        }
        _ => Err(StateError::PathTypeMismatch(display())),
    }
}

/// Removes the key or index at `segments`, returning the removed value.
pub fn remove_at(
    root: &mut StateValue,
    segments: &[String],
    display: &dyn Fn() -> String,
) -> Result<StateValue, StateError> {
    let Some((last, parents)) = segments.split_last() else {
        return Err(StateError::InvalidPath(display()));
    };
    let parent = lookup_mut(root, parents, display)?;
    match parent {
        Value::Object(map) => map
            .remove(last)
            .ok_or_else(|| StateError::UnknownPath(display())),
        Value::Array(items) => {
            let idx = parse_index(last).ok_or_else(|| StateError::PathTypeMismatch(display()))?;
            if idx >= items.len() {
                return Err(StateError::PathTypeMismatch(display()));
            }
            Ok(items.remove(idx))
        }
        _ => Err(StateError::PathTypeMismatch(display())),
    }
}
