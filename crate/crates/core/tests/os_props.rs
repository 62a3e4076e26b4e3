use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use mgk_core::os::{
    BackDispatcher, ChooserState, HardwareState, Os, OsError, OsRequest, PermissionRequest, HARDWARE_FIELDS, HOME,
    PRIORITY_APP_PAGE, PRIORITY_KEYBOARD, PRIORITY_PERMISSION, PRIORITY_SHADE,
};
use mgk_core::state::StateRegistry;
use mgk_core::task::load_pack;
use proptest::prelude::*;
use serde_json::{json, Value};

const CHAIN: [(&str, i32); 4] = [
    ("permission_dialog", PRIORITY_PERMISSION),
    ("system_shade", PRIORITY_SHADE),
    ("keyboard", PRIORITY_KEYBOARD),
    ("app_page", PRIORITY_APP_PAGE),
];

proptest! {
    /// Any registration order, any active set: the winner is the active
    /// handler with the largest priority, else home.
    #[test]
    fn dispatcher_picks_max_active(order in Just((0..CHAIN.len()).collect::<Vec<_>>()).prop_shuffle(), active in 0u32..16) {
        let mut d: BackDispatcher<u32> = BackDispatcher::default();
        for &i in &order {
            let bit = 1 << i;
            d.register_system(CHAIN[i].0, CHAIN[i].1, Arc::new(move |s: &u32| s & bit != 0));
        }
        let want = (0..CHAIN.len())
            .filter(|i| active & (1 << i) != 0)
            .max_by_key(|&i| CHAIN[i].1)
            .map_or(HOME, |i| CHAIN[i].0);
        prop_assert_eq!(d.select(&active), want);
        d.begin_frame();
        let fired = d.dispatch(&active);
        prop_assert_eq!(fired.as_deref(), Some(want));
        prop_assert_eq!(d.dispatch(&active), None);
    }

    #[test]
    fn app_priorities_are_bounded(p in -50i32..1100) {
        let mut d: BackDispatcher<()> = BackDispatcher::default();
        let r = d.register_app("x", p, Arc::new(|_: &()| true));
        prop_assert_eq!(r.is_ok(), p > 0 && p < PRIORITY_PERMISSION);
    }
}

fn boot() -> (Os, StateRegistry) {
    let pack = load_pack(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sample")).unwrap();
    let reg = pack.base_registry().clone();
    (Os::new(pack.catalog.clone()), reg)
}

/// All five session-level layers (permission, shade, chooser, recents,
/// keyboard) plus an app page with history, in every combination.
#[test]
fn session_back_chain_over_every_combination() {
    let layers = [
        ("permission_dialog", 1000),
        ("system_shade", 800),
        ("chooser", 750),
        ("recents", 720),
        ("keyboard", 700),
        ("app_page", 100),
    ];
    for mask in 0u32..64 {
        let (mut os, mut reg) = boot();
        os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "notes".into() }).unwrap();
        if mask & 32 != 0 {
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
                intent_type: "share.text".into(),
                payload: json!({}),
                candidates: vec!["a".into(), "b".into()],
                reply: None,
            });
        }
        s.recents_open = mask & 8 != 0;
        s.keyboard = mask & 16 != 0;
        os.put_session(&mut reg, &s).unwrap();

        // Walk the chain: each back consumes exactly the top active layer.
        let mut live = mask;
        loop {
            let want = (0..layers.len()).filter(|i| live & (1 << i) != 0).max_by_key(|&i| layers[i].1);
            let expect = want.map_or(HOME, |i| layers[i].0);
            assert_eq!(os.back_handler(&reg).unwrap(), expect, "mask={mask:06b} live={live:06b}");
            os.begin_frame();
            let (fired, _) = os.back(&mut reg).unwrap().unwrap();
            assert_eq!(fired, expect);
            match want {
                Some(i) => live &= !(1 << i),
                None => break,
            }
        }
        assert_eq!(os.session(&reg).unwrap().foreground, None);
    }
}

#[test]
fn draft_survives_backgrounding() {
    let (mut os, mut reg) = boot();
    os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "notes".into() }).unwrap();
    os.fire(&mut reg, "notes", "note.new", &BTreeMap::new()).unwrap();
    reg.set("notes/draft/title", json!("half written")).unwrap();
    let task = os.session(&reg).unwrap().foreground.unwrap();
    os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "reader".into() }).unwrap();
    os.dispatch(&mut reg, OsRequest::LaunchApp { app_id: "notes".into() }).unwrap();
    let s = os.session(&reg).unwrap();
    assert_eq!(s.foreground, Some(task));
    assert_eq!(s.foreground_task().unwrap().top().current.state, "new");
    assert_eq!(reg.get("notes/draft/title").unwrap(), json!("half written"));
}

fn field_value() -> impl Strategy<Value = (usize, Value)> {
    (0..HARDWARE_FIELDS.len(), prop_oneof![any::<bool>().prop_map(Value::Bool), (0u64..130).prop_map(|n| json!(n))])
}

proptest! {
    #[test]
    fn hardware_writes_keep_airplane_invariant(writes in prop::collection::vec(field_value(), 0..30)) {
        let (os, mut reg) = boot();
        for (f, v) in writes {
            let before = os.hardware(&reg).unwrap();
            let field = HARDWARE_FIELDS[f];
            match os.set_hardware(&mut reg, field, &v) {
                Ok(h) => {
                    prop_assert!(h.invariant_holds());
                    if field == "airplane_mode" && v == json!(true) {
                        prop_assert!(!h.wifi && !h.bluetooth && !h.cellular);
                    }
                }
                Err(e) => {
                    prop_assert_eq!(os.hardware(&reg).unwrap(), before.clone());
                    if let OsError::AirplaneModeActive(_) = e {
                        prop_assert!(before.airplane_mode && v == json!(true));
                    }
                }
            }
            prop_assert!(os.hardware(&reg).unwrap().invariant_holds());
        }
    }
}

#[test]
fn airplane_scenario() {
    let (os, mut reg) = boot();
    let h = os.set_hardware(&mut reg, "airplane_mode", &json!(true)).unwrap();
    assert_eq!(h, HardwareState { airplane_mode: true, wifi: false, bluetooth: false, cellular: false, ..os.hardware(&reg).unwrap() });
    assert!(matches!(os.set_hardware(&mut reg, "wifi", &json!(true)), Err(OsError::AirplaneModeActive(_))));
    let h = os.set_hardware(&mut reg, "airplane_mode", &json!(false)).unwrap();
    assert!(!h.wifi && !h.cellular);
    assert!(os.set_hardware(&mut reg, "wifi", &json!(true)).unwrap().wifi);
}
