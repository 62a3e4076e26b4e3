//! Acceptance gate. Each criterion runs under its time limit and prints one
//! PASS or FAIL line; the test fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mgk::{run_benchmark, ReportFile, RunConfig};
use mgk_core::episode::Episode;
use mgk_core::metrics::{format_decimal, reward, Penalties, Truncation};
use mgk_core::nav::{enumerate_paths, NavCursor, NavEngine, NavError, NavSpec, UiStateId};
use mgk_core::os::{
    AppCatalog, ChooserState, HardwareState, IntentDecl, IntentRegistry, Os, OsError, OsRequest, PermissionRequest,
    Resolution, HOME,
};
use mgk_core::screen::{Action, ActionKind};
use mgk_core::script::AgentKind;
use mgk_core::state::{apply_diff, diff, DiffKind, StatePath, StateRegistry, StoreSpec, Tier};
use mgk_core::task::{load_pack, match_field, stratify, AnswerField, Stratum, TaskError, TaskPack, ANSWER_SHEET_BONUS};
use mgk_pool::{resident_bytes, Pool, PoolConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sample")
}

fn pack() -> TaskPack {
    load_pack(&sample_dir()).unwrap()
}

// 1. Reward lattice

/// Hand-derived reward in ten-thousandths. Every coefficient keeps quarter
/// inputs on an exact integer grid: 2500 * 0.8 * 0.8 * 0.5 * 0.5 = 400.
fn hand_reward(quarters: u32, f: &Penalties) -> u32 {
    let mut r = quarters * 2500;
    if f.goal_success && !f.clean {
        r = r * 4 / 5;
    }
    if f.false_complete && quarters > 0 {
        r = r * 4 / 5;
    }
    if f.post_success_abort {
        r /= 2;
    }
    if f.overdue {
        r /= 2;
    }
    r
}

fn reward_lattice() {
    let mut seen = BTreeSet::new();
    for q in 0..=4u32 {
        let p = BigRational::new(BigInt::from(q), BigInt::from(4));
        for bits in 0..32u32 {
            let f = Penalties {
                goal_success: bits & 1 != 0,
                clean: bits & 2 != 0,
                false_complete: bits & 4 != 0,
                post_success_abort: bits & 8 != 0,
                overdue: bits & 16 != 0,
            };
            let got = format_decimal(&reward(&p, &f).unwrap(), 4);
            let want = hand_reward(q, &f);
            assert_eq!(got, format!("{}.{:04}", want / 10_000, want % 10_000), "p={q}/4 {f:?}");
            seen.insert(got);
        }
    }
    // The full discount stack reaches 0.0400 at p = 1 and nothing is lost.
    assert!(seen.contains("0.0400") && seen.contains("1.0000") && seen.contains("0.0000"));
}

// 2. Strata

fn strata_partition() {
    let mut counts = [0usize; 4];
    for sr in 0..=100 {
        for pr in 0..=100 {
            let (s, p) = (f64::from(sr), f64::from(pr));
            // The four regions written as disjoint sets rather than a chain.
            let top = s >= 75.0 && p >= 75.0;
            let mid = s >= 25.0 && p >= 50.0;
            let low = s > 0.0 && p >= 25.0;
            let regions = [top, mid && !top, low && !mid, !low && !mid];
            assert_eq!(regions.iter().filter(|r| **r).count(), 1, "({sr},{pr}) in {regions:?}");
            let i = regions.iter().position(|r| *r).unwrap();
            assert_eq!(stratify(s, p).unwrap(), Stratum::ALL[i], "({sr},{pr})");
            counts[i] += 1;
        }
    }
    assert_eq!(counts.iter().sum::<usize>(), 10_201);
    for ((sr, pr), want) in [((75.0, 75.0), Stratum::L1), ((25.0, 50.0), Stratum::L2), ((0.1, 25.0), Stratum::L3), ((0.0, 100.0), Stratum::L4)] {
        assert_eq!(stratify(sr, pr).unwrap(), want, "({sr},{pr})");
    }
}

// 3. Snapshot, fork, diff

const OVERLAYS: [&str; 2] = ["app.one", "os.two"];
const KEYS: [&str; 4] = ["a", "b", "c", "d"];

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    let pick = if depth == 0 { rng.gen_range(0..4) } else { rng.gen_range(0..6) };
    match pick {
        0 => Value::Null,
        1 => json!(rng.gen_bool(0.5)),
        2 => json!(rng.gen_range(-2i64..3)),
        3 => json!(["", "x", "yz"][rng.gen_range(0..3)]),
        4 => Value::Array((0..rng.gen_range(0..4)).map(|_| random_value(rng, depth - 1)).collect()),
        _ => Value::Object(
            (0..rng.gen_range(0..4))
                .map(|_| (KEYS[rng.gen_range(0..KEYS.len())].to_string(), random_value(rng, depth - 1)))
                .collect(),
        ),
    }
}

fn random_writes(rng: &mut ChaCha8Rng) -> Vec<(String, Value)> {
    (0..rng.gen_range(0..10))
        .map(|_| {
            let store = OVERLAYS[rng.gen_range(0..2)];
            let depth = rng.gen_range(1..3);
            let segs: Vec<&str> = (0..depth).map(|_| KEYS[rng.gen_range(0..KEYS.len())]).collect();
            (format!("{store}/{}", segs.join("/")), random_value(rng, 2))
        })
        .collect()
}

fn fresh_registry() -> StateRegistry {
    let mut r = StateRegistry::new();
    r.register(StoreSpec::new("world.w", Tier::WorldData, json!({"items": {"1": "x"}}))).unwrap();
    r.register(StoreSpec::new(OVERLAYS[0], Tier::RuntimeOverlay, json!({"a": {}}))).unwrap();
    r.register(StoreSpec::new(OVERLAYS[1], Tier::OsRuntime, json!({}))).unwrap();
    r.register(StoreSpec::new("scratch", Tier::Volatile, json!({"n": 0}))).unwrap();
    r
}

/// Writes that fail (e.g. descending through a scalar) must leave nothing.
fn write_all(r: &mut StateRegistry, ws: &[(String, Value)]) {
    for (path, v) in ws {
        let before = r.snapshot();
        if r.set(path, v.clone()).is_err() {
            assert_eq!(r.snapshot().canonical_bytes(), before.canonical_bytes(), "failed write to {path} left a trace");
        }
    }
}

/// Recursive comparison reporting the shallowest differing subtrees.
fn compare(at: Vec<String>, a: Option<&Value>, b: Option<&Value>, out: &mut BTreeSet<String>) {
    let sub = |k: String| {
        let mut p = at.clone();
        p.push(k);
        p
    };
    match (a, b) {
        (Some(Value::Object(x)), Some(Value::Object(y))) => {
            for k in x.keys().chain(y.keys()).collect::<BTreeSet<_>>() {
                compare(sub(k.clone()), x.get(k), y.get(k), out);
            }
        }
        (Some(Value::Array(x)), Some(Value::Array(y))) => {
            for i in 0..x.len().max(y.len()) {
                compare(sub(i.to_string()), x.get(i), y.get(i), out);
            }
        }
        (None, None) => {}
        (x, y) if x == y => {}
        (x, y) => {
            let kind = match (x, y) {
                (None, _) => DiffKind::Added,
                (_, None) => DiffKind::Removed,
                _ => DiffKind::Changed,
            };
            out.insert(format!("{:?}", (at, kind, x, y)));
        }
    }
}

fn snapshot_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 0..1000 {
        let mut r = fresh_registry();
        write_all(&mut r, &random_writes(&mut rng));
        let a = r.snapshot();
        let later = random_writes(&mut rng);
        write_all(&mut r, &later);
        let b = r.snapshot();

        // Round trip.
        r.restore(&a).unwrap();
        assert_eq!(r.snapshot().canonical_bytes(), a.canonical_bytes(), "trial {trial}: restore");

        // Fork isolation: the parent evolves exactly like a twin that never
        // had a child.
        let mut child = r.fork(&a).unwrap();
        let mut twin = r.fork(&a).unwrap();
        write_all(&mut child, &random_writes(&mut rng));
        write_all(&mut r, &later);
        write_all(&mut twin, &later);
        assert_eq!(r.snapshot().canonical_bytes(), twin.snapshot().canonical_bytes(), "trial {trial}: fork leaked");
        assert_eq!(r.snapshot().canonical_bytes(), b.canonical_bytes(), "trial {trial}: replay diverged");

        // Diff against the recursive compare, then patch.
        let d = diff(&a, &b).unwrap();
        let got: BTreeSet<String> = d
            .entries
            .iter()
            .map(|e| {
                let p = StatePath::parse(&e.path).unwrap();
                let mut segs = vec![p.store];
                segs.extend(p.segments);
                format!("{:?}", (segs, e.kind, e.before.as_ref(), e.after.as_ref()))
            })
            .collect();
        let mut want = BTreeSet::new();
        for id in a.store_ids() {
            compare(vec![id.to_string()], a.store(id), b.store(id), &mut want);
        }
        assert_eq!(got, want, "trial {trial}: diff");
        assert_eq!(apply_diff(&a, &d).unwrap().canonical_bytes(), b.canonical_bytes(), "trial {trial}: patch");
    }
}

// 4. Navigation machines

fn reader_fixture() -> Arc<NavSpec> {
    let doc = json!({
        "app_id": "reader",
        "initial_state": "book",
        "states": [
            {"name": "book", "path": "/book/:id"},
            {"name": "book_modal", "path": "/book/:id", "search": {"modal": "open"}},
            {"name": "user_recommend", "path": "/user/:mid", "search": {"panel": "recommend"}},
            {"name": "user_unfollow", "path": "/user/:mid", "search": {"menu": "unfollow"}}
        ],
        "transitions": [
            {"id": "book.modal.open", "from": {"path": "/book/:id", "search": {"modal": null}}, "cases": [{"to": "book_modal"}]},
            {"id": "user.follow.tap", "cases": [
                {"to": "/user/:mid", "search": {"panel": "recommend"},
                 "when": {"op": "eq", "left": {"ref": "appState", "key": "isFollowing"}, "right": false}},
                {"to": "/user/:mid", "search": {"menu": "unfollow"}, "when": {"op": "always"}}
            ]},
            {"id": "shelf.remove", "cases": [{"to": "book"}]}
        ],
        "ui_conditions": {"shelf.remove": {"op": "memberOf", "ref": "initialShelf", "param": "bookId"}}
    });
    Arc::new(NavSpec::parse_str(&doc.to_string()).unwrap())
}

fn on_book(app: Value) -> NavEngine {
    let mut e = NavEngine::new(reader_fixture(), app, json!({"initialShelf": ["60", "61"]}));
    e.cursor = NavCursor::at(UiStateId::new("book").with_param("id", "60"));
    e
}

fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()
}

fn guard_fixtures() {
    let mut e = on_book(json!({}));
    assert_eq!(e.go("book.modal.open", &BTreeMap::new()).unwrap().state, "book_modal");
    assert!(matches!(e.go("book.modal.open", &BTreeMap::new()), Err(NavError::FromConstraintViolated { .. })));

    let mut e = on_book(json!({"isFollowing": true}));
    let s = e.go("user.follow.tap", &params(&[("mid", "7")])).unwrap();
    assert_eq!(s.state, "user_unfollow");
    assert_eq!(e.spec.route(&s), "/user/7?menu=unfollow");
    let mut e = on_book(json!({"isFollowing": false}));
    let s = e.go("user.follow.tap", &params(&[("mid", "7")])).unwrap();
    assert_eq!(e.spec.route(&s), "/user/7?panel=recommend");

    let e = on_book(json!({}));
    assert!(e.condition("shelf.remove", &params(&[("bookId", "60")])).unwrap());
    assert!(!e.condition("shelf.remove", &params(&[("bookId", "99")])).unwrap());
    assert!(matches!(e.condition("shelf.remove", &BTreeMap::new()), Err(NavError::UnresolvedRef(_))));
}

/// A generated transition: optional source, then cases whose guard is a
/// literal true, a literal false, or absent (an unconditional fallback).
struct GenTransition {
    from: Option<usize>,
    cases: Vec<(usize, Option<bool>)>,
}

fn gen_fixture(rng: &mut ChaCha8Rng) -> (usize, Vec<GenTransition>) {
    let n = rng.gen_range(2..=12);
    let ts = (0..rng.gen_range(1..=2 * n))
        .map(|_| {
            let from = rng.gen_bool(0.85).then(|| rng.gen_range(0..n));
            let mut cases: Vec<(usize, Option<bool>)> = (0..rng.gen_range(0..3))
                .map(|_| (rng.gen_range(0..n), [None, Some(true), Some(false)][rng.gen_range(0..3)]))
                .collect();
            // The unconditional case, if any, closes the list.
            if let Some(i) = cases.iter().position(|(_, g)| g.is_none()) {
                cases.truncate(i + 1);
            }
            GenTransition { from, cases }
        })
        .collect();
    (n, ts)
}

fn fixture_spec(n: usize, ts: &[GenTransition]) -> NavSpec {
    let states: Vec<Value> = (0..n).map(|i| json!({"name": format!("s{i}"), "path": format!("/s{i}")})).collect();
    let transitions: Vec<Value> = ts
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let cases: Vec<Value> = t
                .cases
                .iter()
                .map(|(to, g)| match g {
                    None => json!({"to": format!("s{to}")}),
                    Some(b) => json!({"to": format!("s{to}"), "when": {"op": "eq", "left": 0, "right": if *b { 0 } else { 1 }}}),
                })
                .collect();
            let mut v = json!({"id": format!("t{k:02}"), "cases": cases});
            if let Some(f) = t.from {
                v["from"] = json!({"path": format!("/s{f}")});
            }
            v
        })
        .collect();
    let doc = json!({"app_id": "fx", "initial_state": "s0", "states": states, "transitions": transitions});
    NavSpec::parse_str(&doc.to_string()).unwrap()
}

/// Shortest distance by exhaustive simple-path DFS over the edges a firing
/// can take: the first case not literally false, or a self loop when a
/// transition has no cases.
fn dfs_distance(n: usize, ts: &[GenTransition], goal: usize) -> Option<usize> {
    let mut adj = vec![BTreeSet::new(); n];
    for t in ts {
        let sources: Vec<usize> = t.from.map_or_else(|| (0..n).collect(), |f| vec![f]);
        let target = if t.cases.is_empty() { Some(None) } else { t.cases.iter().find(|(_, g)| *g != Some(false)).map(|(to, _)| Some(*to)) };
        if let Some(to) = target {
            for &s in &sources {
                adj[s].insert(to.unwrap_or(s));
            }
        }
    }
    fn walk(adj: &[BTreeSet<usize>], at: usize, goal: usize, on_path: &mut Vec<bool>, depth: usize, best: &mut Option<usize>) {
        if at == goal {
            *best = Some(best.map_or(depth, |b| b.min(depth)));
            return;
        }
        for &next in &adj[at] {
            if !on_path[next] {
                on_path[next] = true;
                walk(adj, next, goal, on_path, depth + 1, best);
                on_path[next] = false;
            }
        }
    }
    let mut best = None;
    let mut on_path = vec![false; n];
    on_path[0] = true;
    walk(&adj, 0, goal, &mut on_path, 0, &mut best);
    best
}

fn efsm_semantics() {
    guard_fixtures();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..500 {
        let (n, ts) = gen_fixture(&mut rng);
        let spec = fixture_spec(n, &ts);
        for goal in 0..n {
            let paths = enumerate_paths(&spec, &format!("s{goal}"), n).unwrap();
            assert_eq!(paths.first().map(Vec::len), dfs_distance(n, &ts, goal), "fixture {k} goal s{goal}");
        }
    }
}

// 5. OS runtime

fn boot(p: &TaskPack) -> (Os, StateRegistry) {
    (Os::new(p.catalog.clone()), p.base_registry().clone())
}

fn keep_alive(p: &TaskPack) {
    let (mut os, mut reg) = boot(p);
    os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "notes".into() }).unwrap();
    os.fire(&mut reg, "notes", "note.new", &BTreeMap::new()).unwrap();
    reg.set("notes/draft/title", json!("half a thought")).unwrap();
    let s = os.session(&reg).unwrap();
    let task = s.foreground.unwrap();
    let stack = serde_json::to_value(&s.foreground_task().unwrap().activities).unwrap();
    let store = reg.get("notes").unwrap();

    os.dispatch(&mut reg, OsRequest::GoHome).unwrap();
    os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "reader".into() }).unwrap();
    os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "notes".into() }).unwrap();
    let s = os.session(&reg).unwrap();
    assert_eq!(s.foreground, Some(task));
    assert_eq!(serde_json::to_value(&s.foreground_task().unwrap().activities).unwrap(), stack);
    assert_eq!(reg.get("notes").unwrap(), store);
    assert_eq!(reg.get("notes/draft/title").unwrap(), json!("half a thought"));
}

fn airplane(p: &TaskPack) {
    let (os, mut reg) = boot(p);
    for radio in ["wifi", "bluetooth", "cellular"] {
        os.set_hardware(&mut reg, radio, &json!(true)).unwrap();
    }
    let before = os.hardware(&reg).unwrap();
    let h = os.set_hardware(&mut reg, "airplane_mode", &json!(true)).unwrap();
    assert_eq!(h, HardwareState { airplane_mode: true, wifi: false, bluetooth: false, cellular: false, ..before });
    assert_eq!(reg.get("os.settings/hardware/wifi").unwrap(), json!(false));
    assert!(matches!(os.set_hardware(&mut reg, "bluetooth", &json!(true)), Err(OsError::AirplaneModeActive(_))));
    let h = os.set_hardware(&mut reg, "airplane_mode", &json!(false)).unwrap();
    assert!(!h.wifi && !h.bluetooth && !h.cellular, "radios stay off");
}

fn back_chain(p: &TaskPack) {
    // Five session layers, each present or absent, with and without an
    // app page that has history underneath.
    let layers = [("permission_dialog", 1000), ("system_shade", 800), ("chooser", 750), ("recents", 720), ("keyboard", 700)];
    for app_page in [false, true] {
        for mask in 0u32..32 {
            let (mut os, mut reg) = boot(p);
            os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "notes".into() }).unwrap();
            if app_page {
                os.fire(&mut reg, "notes", "note.new", &BTreeMap::new()).unwrap();
            }
            let mut s = os.session(&reg).unwrap();
            if mask & 1 != 0 {
                s.permission = Some(PermissionRequest {
                    app_id: "notes".into(),
                    permission: "p".into(),
                    transition: "t".into(),
                    params: BTreeMap::new(),
                });
            }
            s.shade_open = mask & 2 != 0;
            if mask & 4 != 0 {
                s.chooser = Some(ChooserState {
                    intent_type: "x".into(),
                    payload: json!({}),
                    candidates: vec!["a".into(), "b".into()],
                    reply: None,
                });
            }
            s.recents_open = mask & 8 != 0;
            s.keyboard = mask & 16 != 0;
            os.put_session(&mut reg, &s).unwrap();

            let mut expected: Vec<&str> = (0..5).filter(|i| mask & (1 << i) != 0).map(|i| layers[i].0).collect();
            if app_page {
                expected.push("app_page");
            }
            expected.push(HOME);
            let mut fired = Vec::new();
            for _ in 0..expected.len() {
                os.begin_frame();
                fired.push(os.back(&mut reg).unwrap().unwrap().0);
            }
            assert_eq!(fired, expected, "mask={mask:05b} app_page={app_page}");
        }
    }
}

fn intents(p: &TaskPack) {
    let decl = |app: &str, ty: &str, state: &str| IntentDecl {
        app_id: app.into(),
        intent_type: ty.into(),
        target_state: state.into(),
        supports_result: false,
        payload_slot: None,
    };
    let mut decls = vec![decl("notes", "compose.message", "new")];
    decls.extend(p.catalog.intents.types().flat_map(|t| {
        p.catalog.apps.keys().filter_map(move |a| p.catalog.intents.handler(t, a).cloned())
    }));
    let catalog = AppCatalog { intents: IntentRegistry::new(decls).unwrap(), ..(*p.catalog).clone() };
    let mut os = Os::new(Arc::new(catalog));
    let mut reg = p.base_registry().clone();

    assert!(matches!(os.resolve_intent("pick.contact"), Ok(Resolution::Direct(d)) if d.app_id == "contacts"));
    assert!(matches!(os.resolve_intent("compose.message"), Ok(Resolution::Chooser(c)) if c.len() == 2));
    let before = reg.snapshot();
    assert_eq!(os.send_intent(&mut reg, "nothing.handles.this", json!({})), Err(OsError::NoHandler("nothing.handles.this".into())));
    assert_eq!(reg.snapshot().canonical_bytes(), before.canonical_bytes());

    os.send_intent(&mut reg, "pick.contact", json!({})).unwrap();
    let s = os.session(&reg).unwrap();
    assert_eq!(s.foreground_task().unwrap().app_id, "contacts");
    assert!(s.chooser.is_none());

    os.send_intent(&mut reg, "compose.message", json!({})).unwrap();
    let s = os.session(&reg).unwrap();
    assert_eq!(s.chooser.as_ref().unwrap().candidates, ["messages", "notes"]);
    os.choose(&mut reg, "notes").unwrap();
    let s = os.session(&reg).unwrap();
    assert_eq!(s.foreground_task().unwrap().app_id, "notes");
    assert_eq!(s.foreground_task().unwrap().top().current.state, "new");
}

fn os_runtime() {
    let p = pack();
    keep_alive(&p);
    airplane(&p);
    back_chain(&p);
    intents(&p);
}

// 6. Budgets and loop detection

fn budgets_and_loops() {
    let p = pack();
    let mut sheets = 0;
    for (id, t) in &p.templates {
        let inst = p.instantiate(id, 0).unwrap();
        let bonus = if t.answer_fields.is_empty() { 0 } else { ANSWER_SHEET_BONUS };
        assert_eq!(ANSWER_SHEET_BONUS, 15);
        assert_eq!(inst.step_budget, t.budget_class + bonus, "{id}");
        sheets += usize::from(bonus > 0);

        if bonus > 0 && sheets == 1 {
            // Waiting out the clock ends at the extended budget, not before.
            let mut ep = Episode::start(p.catalog.clone(), p.base_registry(), Arc::new(inst)).unwrap();
            let mut k = 0;
            while !ep.finished() {
                let r = ep.step(&Action::with_value(ActionKind::Wait, (k % 2).to_string())).unwrap();
                k += 1;
                assert_eq!(r.truncated_by != Truncation::None, k == t.budget_class + bonus, "{id} step {k}");
            }
            assert_eq!(ep.truncated_by(), Truncation::Budget);
            assert_eq!(ep.steps(), t.budget_class + 15);
        }
    }
    assert!(sheets > 0, "the sample pack has answer-sheet tasks");

    let inst = Arc::new(p.instantiate("note_titles", 0).unwrap());
    let mut ep = Episode::start(p.catalog.clone(), p.base_registry(), inst).unwrap();
    let same = Action::click(500, 20);
    for i in 1..=9 {
        assert_eq!(ep.step(&same).unwrap().truncated_by, Truncation::None, "repeat {i}");
    }
    let tenth = ep.step(&same).unwrap();
    assert_eq!(tenth.truncated_by, Truncation::LoopDetect);
    assert!(tenth.terminated);
    assert_eq!(ep.steps(), 10);
}

// 7. Answer-sheet matchers

fn field(v: Value) -> AnswerField {
    serde_json::from_value(v).unwrap()
}

fn matchers() {
    let plain = field(json!({"field_id": "t", "field_type": "number", "matcher": "number", "gold": 34, "hint": "Number only"}));
    assert!(match_field(&plain, &json!(34)).unwrap());
    assert!(match_field(&plain, &json!(34.0)).unwrap());
    assert!(matches!(match_field(&plain, &json!("34°C")), Err(TaskError::TypeMismatch { .. })));

    let tol = field(json!({"field_id": "t", "field_type": "number", "matcher": "number", "gold": 34, "tolerance": 0.5, "hint": "Number only"}));
    for (v, ok) in [(34.5, true), (33.5, true), (34.0, true), (34.51, false), (33.49, false)] {
        assert_eq!(match_field(&tol, &json!(v)).unwrap(), ok, "{v}");
    }

    let choice = field(json!({"field_id": "c", "field_type": "choice", "matcher": "exact", "gold": "wifi", "hint": "Pick one", "choices": ["wifi", "bluetooth"]}));
    assert!(match_field(&choice, &json!("wifi")).unwrap());
    assert!(!match_field(&choice, &json!("bluetooth")).unwrap());

    let rep = field(json!({"field_id": "r", "field_type": "repeatable", "matcher": "exact", "gold": ["a", "b", "a"], "hint": "One per line"}));
    assert!(match_field(&rep, &json!(["a", "a", "b"])).unwrap());
    assert!(!match_field(&rep, &json!(["a", "b"])).unwrap());
    assert!(!match_field(&rep, &json!(["a", "b", "b"])).unwrap());
}

// 8. End-to-end determinism

fn bench(agent: AgentKind, parallelism: usize) -> ReportFile {
    let mut cfg = RunConfig::new(vec![sample_dir()], agent);
    cfg.seeds = 4;
    cfg.parallelism = parallelism;
    ReportFile::new(agent, cfg.seeds, run_benchmark(&cfg).unwrap())
}

fn ten_thousandths(s: &str) -> u64 {
    let (whole, frac) = s.split_once('.').unwrap();
    whole.parse::<u64>().unwrap() * 10_000 + frac.parse::<u64>().unwrap()
}

fn end_to_end() {
    let a = bench(AgentKind::Oracle, 64);
    assert_eq!(a.report.rows.len(), 64);
    assert_eq!(a.report.rows.iter().map(|r| &r.verdict.template_id).collect::<BTreeSet<_>>().len(), 16);
    assert_eq!(a.report.overall.sr, 100.0);
    assert_eq!(a.report.overall.use_, 0.0);
    let b = bench(AgentKind::Oracle, 64);
    let serial = bench(AgentKind::Oracle, 1);
    assert_eq!(a.comparable_bytes(), b.comparable_bytes(), "two runs differ");
    assert_eq!(a.comparable_bytes(), serial.comparable_bytes(), "parallelism changed the report");

    let s = bench(AgentKind::Sabotage, 64);
    assert_eq!(s.report.rows.len(), 64);
    for (o, v) in a.report.rows.iter().zip(&s.report.rows) {
        let (o, v) = (&o.verdict, &v.verdict);
        assert_eq!((&o.template_id, o.seed), (&v.template_id, v.seed));
        assert!(!v.clean, "{} seed {} stayed clean", v.template_id, v.seed);
        if v.success {
            assert_eq!(ten_thousandths(&v.reward) * 10, ten_thousandths(&o.reward) * 8, "{} seed {}", v.template_id, v.seed);
        }
    }
    assert_eq!(s.report.overall.use_, 100.0);
}

// 9. Pool capacity

fn pool_capacity() {
    let cap_mb = 4096;
    let config = PoolConfig { max_instances: 256, memory_cap_mb: Some(cap_mb), ..PoolConfig::default() };
    let pool = Pool::single(pack(), config);
    let before = resident_bytes().expect("resident memory is readable");
    let ids: Vec<u64> = (0..256).map(|_| pool.create(None).unwrap()).collect();
    let stats = pool.stats();
    assert_eq!((stats.instances, stats.in_episode, stats.creates_total), (256, 0, 256));
    let after = stats.memory_bytes.unwrap();
    let cap = cap_mb * 1024 * 1024;
    assert!(after <= cap, "resident {after} over the {cap} cap");
    let per_instance = after.saturating_sub(before) / 256;
    assert!(per_instance < cap / 256, "{per_instance} bytes per instance");
    let p99 = stats.create_p99_us.unwrap();
    assert!(p99 < 100_000, "create p99 {p99} us");
    assert!(pool.create(None).is_err(), "a 257th instance was admitted");
    for id in ids {
        pool.close(id).unwrap();
    }
    say(&format!("     256 instances: {per_instance} bytes per instance, create p99 {p99} us"));
}

/// Writes past the test harness's output capture so the verdict lines show up
/// in a plain `cargo test` run.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, Duration, fn()); 9] = [
        ("reward lattice", Duration::from_secs(1), reward_lattice),
        ("strata partition", Duration::from_secs(1), strata_partition),
        ("snapshot/fork/diff", Duration::from_secs(30), snapshot_suite),
        ("navigation semantics", Duration::from_secs(5), efsm_semantics),
        ("os runtime", Duration::from_secs(5), os_runtime),
        ("budgets and loop detection", Duration::from_secs(5), budgets_and_loops),
        ("answer matchers", Duration::from_secs(1), matchers),
        ("end-to-end determinism", Duration::from_secs(120), end_to_end),
        ("pool capacity", Duration::from_secs(60), pool_capacity),
    ];
    say("");
    let mut failed = Vec::new();
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let took = started.elapsed();
        let verdict = match outcome {
            Err(_) => "FAIL",
            Ok(()) if took > limit => "FAIL (over time)",
            Ok(()) => "PASS",
        };
        say(&format!("{verdict:<4} {}. {name} ({:.3} s, limit {} s)", i + 1, took.as_secs_f64(), limit.as_secs()));
        if verdict != "PASS" {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
