//! Canonical JSON form for [`StateValue`].
//!
//! The canonical encoding is what snapshot equality, reset and diffing are
//! defined over, so it must be a pure function of the value:
//!
//! - object keys sorted bytewise
//! - integers printed without exponent or fraction
//! - non-integral numbers printed in shortest round-trip form
//! - UTF-8, no insignificant whitespace

use std::cmp::Ordering;
use std::io::Write;

use serde_json::{Map, Number, Value};

use super::StateError;

/// Recursive JSON value held by every store.
///
/// `serde_json::Value` already forbids NaN and infinities, which is the
/// main invariant we need; depth is checked separately.
pub type StateValue = Value;

/// Default nesting limit for containers.
pub const DEFAULT_MAX_DEPTH: usize = 64;

/// Serializes `value` into its canonical byte form.
pub fn canonical_serialize(value: &StateValue) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    write_canonical(&mut out, value);
    out
}

/// Canonical form as a `String` (the bytes are always valid UTF-8).
pub fn canonical_string(value: &StateValue) -> String {
    String::from_utf8(canonical_serialize(value)).expect("canonical JSON is UTF-8")
}

pub(crate) fn write_canonical(out: &mut Vec<u8>, value: &StateValue) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(out, item);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(out, k);
                out.push(b':');
                write_canonical(out, v);
            }
            out.push(b'}');
        }
    }
}

fn write_number(out: &mut Vec<u8>, n: &Number) {
    if let Some(i) = n.as_i64() {
        let _ = write!(out, "{i}");
    } else if let Some(u) = n.as_u64() {
        let _ = write!(out, "{u}");
    } else {
        // serde_json formats finite floats with ryu (shortest round-trip).
        let _ = write!(out, "{n}");
    }
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    let encoded = serde_json::to_string(s).expect("string encoding cannot fail");
    out.extend_from_slice(encoded.as_bytes());
}

/// Parses JSON bytes into a [`StateValue`], enforcing the depth limit.
pub fn parse_value(bytes: &[u8], max_depth: usize) -> Result<StateValue, StateError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| StateError::Parse(e.to_string()))?;
    check_depth(&value, max_depth)?;
    Ok(value)
}

/// Container nesting depth; scalars have depth 0.
pub fn depth(value: &StateValue) -> usize {
    match value {
        Value::Array(items) => 1 + items.iter().map(depth).max().unwrap_or(0),
        Value::Object(map) => 1 + map.values().map(depth).max().unwrap_or(0),
        _ => 0,
    }
}

pub(crate) fn check_depth(value: &StateValue, max_depth: usize) -> Result<(), StateError> {
    let d = depth(value);
    if d > max_depth {
        return Err(StateError::DepthExceeded { depth: d, limit: max_depth });
    }
    Ok(())
}

/// Equality that treats `1` and `1.0` as the same number. Used by guards and
/// judges; canonical bytes still distinguish the two.
pub fn loose_eq(a: &StateValue, b: &StateValue) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => cmp_numbers(x, y) == Some(Ordering::Equal),
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| loose_eq(p, q))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| loose_eq(v, w)))
        }
        _ => a == b,
    }
}

/// Orders two JSON numbers. Integers are compared exactly; anything else
/// falls back to `f64`.
pub fn cmp_numbers(a: &Number, b: &Number) -> Option<Ordering> {
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
        return Some(x.cmp(&y));
    }
    if let (Some(x), Some(y)) = (a.as_u64(), b.as_u64()) {
        return Some(x.cmp(&y));
    }
    a.as_f64()?.partial_cmp(&b.as_f64()?)
}

/// True when `needle`'s fields are all present (recursively) in `hay`.
/// Non-object needles must be loosely equal.
pub fn subset_match(hay: &StateValue, needle: &StateValue) -> bool {
    match (hay, needle) {
        (Value::Object(h), Value::Object(n)) => n
            .iter()
            .all(|(k, v)| h.get(k).is_some_and(|hv| subset_match(hv, v))),
        _ => loose_eq(hay, needle),
    }
}

/// Text used when a value is interpolated into a larger string.
pub fn display_text(value: &StateValue) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => canonical_string(other),
    }
}

/// Builds an object from `(key, value)` pairs.
pub fn object<I, K>(pairs: I) -> StateValue
where
    I: IntoIterator<Item = (K, StateValue)>,
    K: Into<String>,
{
    let mut map = Map::new();
    for (k, v) in pairs {
        map.insert(k.into(), v);
    }
    Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted() {
        let v = json!({"b": 1, "a": 2});
        assert_eq!(canonical_string(&v), r#"{"a":2,"b":1}"#);
    }

    #[test]
    fn nested_and_unicode() {
        let v = json!({"z": [1, 2.5, "é\n"], "a": {"y": null, "x": true}});
        assert_eq!(
            canonical_string(&v),
            "{\"a\":{\"x\":true,\"y\":null},\"z\":[1,2.5,\"é\\n\"]}"
        );
    }

    #[test]
    fn serialize_is_idempotent_through_parse() {
        let v = json!({"k": [0.1, -3, 1e300, "s"], "m": {"\u{1}": 12345678901234i64}});
        let once = canonical_serialize(&v);
        let reparsed = parse_value(&once, DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(canonical_serialize(&reparsed), once);
    }

    #[test]
    fn rejects_non_finite_and_deep_values() {
        assert!(parse_value(b"NaN", 64).is_err());
        assert!(parse_value(b"[Infinity]", 64).is_err());
        let mut deep = String::new();
        for _ in 0..65 {
            deep.push('[');
        }
        for _ in 0..65 {
            deep.push(']');
        }
        assert!(matches!(
            parse_value(deep.as_bytes(), 64),
            Err(StateError::DepthExceeded { depth: 65, .. })
        ));
    }

    #[test]
    fn loose_equality_ignores_number_repr() {
        assert!(loose_eq(&json!(1), &json!(1.0)));
        assert!(!loose_eq(&json!(1), &json!("1")));
        assert!(subset_match(&json!({"a": 1, "b": 2}), &json!({"a": 1})));
        assert!(!subset_match(&json!({"a": 1}), &json!({"a": 1, "b": 2})));
    }
}
