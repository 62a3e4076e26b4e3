use std::collections::BTreeSet;

use mgk_core::state::{apply_diff, diff, DiffKind, Snapshot, StatePath, StateRegistry, StateValue, StoreSpec, Tier};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

fn scalar() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        (-3i64..4).prop_map(|n| json!(n)),
        prop::sample::select(vec!["", "x", "y", "a/b"]).prop_map(|s| json!(s)),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    scalar().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map(prop::sample::select(vec!["a", "b", "c", "d~e", "f/g"]), inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        ]
    })
}

fn snapshot_pair() -> impl Strategy<Value = (Snapshot, Snapshot)> {
    (value(), value(), value(), value()).prop_map(|(a1, a2, b1, b2)| {
        let a = Snapshot::from_value(1, json!({"s1": a1, "s2": a2})).unwrap();
        let b = Snapshot::from_value(2, json!({"s1": b1, "s2": b2})).unwrap();
        (a, b)
    })
}

type Entry = (Vec<String>, DiffKind, Option<Value>, Option<Value>);

/// Reference comparison, written independently of the kernel's diff: walk
/// the union of child keys and report subtrees present on one side only.
fn oracle(at: Vec<String>, a: Option<&Value>, b: Option<&Value>, out: &mut Vec<Entry>) {
    let child = |k: String| {
        let mut p = at.clone();
        p.push(k);
        p
    };
    match (a, b) {
        (None, None) => {}
        (Some(x), None) => out.push((at, DiffKind::Removed, Some(x.clone()), None)),
        (None, Some(y)) => out.push((at, DiffKind::Added, None, Some(y.clone()))),
        (Some(Value::Object(x)), Some(Value::Object(y))) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                oracle(child(k.clone()), x.get(k), y.get(k), out);
            }
        }
        (Some(Value::Array(x)), Some(Value::Array(y))) => {
            for i in 0..x.len().max(y.len()) {
                oracle(child(i.to_string()), x.get(i), y.get(i), out);
            }
        }
        (Some(x), Some(y)) => {
            if x != y {
                out.push((at, DiffKind::Changed, Some(x.clone()), Some(y.clone())));
            }
        }
    }
}

fn oracle_diff(a: &Snapshot, b: &Snapshot) -> BTreeSet<String> {
    let mut out = Vec::new();
    for id in a.store_ids() {
        oracle(vec![id.to_string()], a.store(id), b.store(id), &mut out);
    }
    out.into_iter().map(|e| format!("{e:?}")).collect()
}

#[derive(Debug, Clone)]
struct Write {
    store: usize,
    key: &'static str,
    nested: bool,
    value: Value,
}

fn writes() -> impl Strategy<Value = Vec<Write>> {
    prop::collection::vec(
        (0usize..2, prop::sample::select(vec!["a", "b", "c"]), any::<bool>(), value())
            .prop_map(|(store, key, nested, value)| Write { store, key, nested, value }),
        0..12,
    )
}

const STORES: [&str; 2] = ["app.one", "app.two"];

fn registry() -> StateRegistry {
    let mut r = StateRegistry::new();
    r.register(StoreSpec::new("world.lib", Tier::WorldData, json!({"books": {"1": {"t": "x"}}}))).unwrap();
    r.register(StoreSpec::new(STORES[0], Tier::RuntimeOverlay, json!({"a": {}}))).unwrap();
    r.register(StoreSpec::new(STORES[1], Tier::OsRuntime, json!({}))).unwrap();
    r.register(StoreSpec::new("scratch", Tier::Volatile, json!({"n": 0}))).unwrap();
    r
}

fn bytes(r: &mut StateRegistry) -> Vec<u8> {
    r.snapshot().canonical_bytes().to_vec()
}

fn apply(r: &mut StateRegistry, w: &Write) {
    let path = if w.nested { format!("{}/{}/x", STORES[w.store], w.key) } else { format!("{}/{}", STORES[w.store], w.key) };
    let before = r.snapshot();
    if r.set(&path, w.value.clone()).is_err() {
        assert_eq!(bytes(r), before.canonical_bytes(), "failed write left a trace");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn diff_matches_recursive_compare((a, b) in snapshot_pair()) {
        let d = diff(&a, &b).unwrap();
        let got: BTreeSet<String> = d
            .entries
            .iter()
            .map(|e| {
                let p = StatePath::parse(&e.path).unwrap();
                let mut segs = vec![p.store];
                segs.extend(p.segments);
                format!("{:?}", (segs, e.kind, e.before.clone(), e.after.clone()))
            })
            .collect();
        prop_assert_eq!(got.len(), d.len());
        prop_assert_eq!(got, oracle_diff(&a, &b));
    }

    #[test]
    fn patch_reproduces_target((a, b) in snapshot_pair()) {
        let d = diff(&a, &b).unwrap();
        let patched = apply_diff(&a, &d).unwrap();
        prop_assert_eq!(patched.canonical_bytes(), b.canonical_bytes());
        prop_assert_eq!(d.is_empty(), a.canonical_bytes() == b.canonical_bytes());
        prop_assert!(diff(&a, &a).unwrap().is_empty());
    }

    #[test]
    fn restore_round_trip(ws in writes(), more in writes()) {
        let mut r = registry();
        ws.iter().for_each(|w| apply(&mut r, w));
        let s = r.snapshot();
        more.iter().for_each(|w| apply(&mut r, w));
        r.restore(&s).unwrap();
        prop_assert_eq!(bytes(&mut r), s.canonical_bytes().to_vec());
        r.restore(&s).unwrap();
        let again = r.snapshot();
        prop_assert_eq!(again.canonical_bytes(), s.canonical_bytes());
    }

    #[test]
    fn fork_isolation(setup in writes(), wp in writes(), wc in writes()) {
        let mut parent = registry();
        setup.iter().for_each(|w| apply(&mut parent, w));
        let s = parent.snapshot();
        let mut child = parent.fork(&s).unwrap();
        prop_assert_eq!(bytes(&mut child), s.canonical_bytes().to_vec());
        let mut alone = parent.fork(&s).unwrap();
        for i in 0..wp.len().max(wc.len()) {
            if let Some(w) = wc.get(i) { apply(&mut child, w); }
            if let Some(w) = wp.get(i) { apply(&mut parent, w); apply(&mut alone, w); }
        }
        prop_assert_eq!(bytes(&mut parent), bytes(&mut alone));
    }

    #[test]
    fn identical_writes_give_identical_bytes(ws in writes()) {
        let (mut a, mut b) = (registry(), registry());
        ws.iter().for_each(|w| { apply(&mut a, w); apply(&mut b, w); });
        prop_assert_eq!(bytes(&mut a), bytes(&mut b));
    }

    #[test]
    fn world_data_is_never_written(v in value()) {
        let mut r = registry();
        let before = r.get("world.lib").unwrap();
        prop_assert!(r.set("world.lib/books/1/t", v.clone()).is_err());
        prop_assert!(r.set("world.lib", v).is_err());
        prop_assert_eq!(r.get("world.lib").unwrap(), before);
    }
}

#[test]
fn snapshot_size_ignores_world_data() {
    let build = |n: usize| {
        let books: Map<String, StateValue> = (0..n).map(|i| (i.to_string(), json!({"title": format!("b{i}")}))).collect();
        let mut r = StateRegistry::new();
        r.register(StoreSpec::new("world.lib", Tier::WorldData, Value::Object(books))).unwrap();
        r.register(StoreSpec::new("app.one", Tier::RuntimeOverlay, json!({"shelf": ["1"]}))).unwrap();
        r.snapshot()
    };
    assert_eq!(build(10).canonical_bytes(), build(100).canonical_bytes());
}

#[test]
fn eight_forks_share_initial_bytes() {
    let mut r = registry();
    r.set("app.one/a", json!({"k": [1, 2]})).unwrap();
    let s = r.snapshot();
    let forks: Vec<Vec<u8>> = (0..8).map(|_| bytes(&mut r.fork(&s).unwrap())).collect();
    assert!(forks.iter().all(|b| *b == forks[0]));
}
