use std::path::PathBuf;
use std::sync::Arc;

use mgk_core::env::Declared;
use mgk_core::episode::Episode;
use mgk_core::metrics::{
    aggregate, detect_side_effects, format_decimal, reward, EpisodeVerdict, ExpectedChangeMask, Penalties, ReportRow,
    RowLabels, Truncation,
};
use mgk_core::screen::{Action, ActionKind};
use mgk_core::script::{Agent, ScriptedAgent};
use mgk_core::state::Snapshot;
use mgk_core::task::{load_pack, Composition, Objective, Scope, Stratum, Tag, TaskPack};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use serde_json::{json, Value};

fn pack() -> TaskPack {
    load_pack(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sample")).unwrap()
}

fn flags(bits: u32) -> Penalties {
    Penalties {
        goal_success: bits & 1 != 0,
        clean: bits & 2 != 0,
        false_complete: bits & 4 != 0,
        post_success_abort: bits & 8 != 0,
        overdue: bits & 16 != 0,
    }
}

/// Reward in ten-thousandths by integer arithmetic: each discount is a
/// multiply-then-divide that stays exact because the inputs are quarters.
fn oracle_reward(quarters: i64, f: &Penalties) -> (i64, i64) {
    let mut num = quarters;
    let mut den = 4;
    let mut apply = |on: bool, n: i64, d: i64| {
        if on {
            num *= n;
            den *= d;
        }
    };
    apply(f.goal_success && !f.clean, 4, 5);
    apply(f.false_complete && quarters > 0, 4, 5);
    apply(f.post_success_abort, 1, 2);
    apply(f.overdue, 1, 2);
    (num, den)
}

fn oracle_text(num: i64, den: i64) -> String {
    // Round half away from zero at four decimals; all values are non-negative.
    let scaled = (num * 10_000 * 2 + den) / (2 * den);
    format!("{}.{:04}", scaled / 10_000, scaled % 10_000)
}

#[test]
fn reward_lattice_matches_integer_oracle() {
    for q in 0..=4i64 {
        let p = BigRational::new(BigInt::from(q), BigInt::from(4));
        for bits in 0..32 {
            let f = flags(bits);
            let r = reward(&p, &f).unwrap();
            let (n, d) = oracle_reward(q, &f);
            assert_eq!(r, BigRational::new(BigInt::from(n), BigInt::from(d)), "p={q}/4 {f:?}");
            assert_eq!(format_decimal(&r, 4), oracle_text(n, d));
            assert!(r >= BigRational::from_integer(0.into()) && r <= BigRational::from_integer(1.into()));
            for flag in 0..5 {
                let raised = reward(&p, &flags(bits | (1 << flag))).unwrap();
                // Raising `clean` removes a discount; every other flag adds one.
                if flag == 1 {
                    assert!(raised >= r);
                } else {
                    assert!(raised <= r, "p={q}/4 bits={bits} flag={flag}");
                }
            }
        }
    }
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![Just(Value::Null), any::<bool>().prop_map(Value::Bool), (0i64..3).prop_map(|n| json!(n))];
    leaf.prop_recursive(3, 20, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Value::Array),
            prop::collection::btree_map(prop::sample::select(vec!["a", "b", "c"]), inner, 0..3)
                .prop_map(|m| Value::Object(m.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        ]
    })
}

/// Paths where two trees differ, reported at the shallowest point where one
/// side lacks a key or the node kinds disagree.
fn differing(at: String, a: Option<&Value>, b: Option<&Value>, out: &mut Vec<String>) {
    match (a, b) {
        (Some(Value::Object(x)), Some(Value::Object(y))) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                differing(format!("{at}/{k}"), x.get(k), y.get(k), out);
            }
        }
        (Some(Value::Array(x)), Some(Value::Array(y))) => {
            for i in 0..x.len().max(y.len()) {
                differing(format!("{at}/{i}"), x.get(i), y.get(i), out);
            }
        }
        (x, y) if x != y => out.push(at),
        _ => {}
    }
}

fn masked(allowed: &[String], path: &str) -> bool {
    allowed.iter().any(|p| {
        let segs: Vec<&str> = p.split('/').collect();
        let have: Vec<&str> = path.split('/').collect();
        have.len() >= segs.len() && have[..segs.len()] == segs[..]
    })
}

proptest! {
    #[test]
    fn side_effects_are_unmasked_diff_paths(
        a in (value(), value()),
        b in (value(), value()),
        allowed in prop::collection::vec(
            prop::sample::select(vec!["s1", "s2", "s1/a", "s1/b/c", "s2/0", "s2/a/b"]).prop_map(str::to_string), 0..3),
    ) {
        let sa = Snapshot::from_value(1, json!({"s1": a.0, "s2": a.1})).unwrap();
        let sb = Snapshot::from_value(2, json!({"s1": b.0, "s2": b.1})).unwrap();
        let mask = ExpectedChangeMask::new(allowed.clone());
        let got = detect_side_effects(&sa, &sb, &mask).unwrap();
        let mut want = Vec::new();
        for id in ["s1", "s2"] {
            differing(id.to_string(), sa.store(id), sb.store(id), &mut want);
        }
        let mut want: Vec<String> = want.into_iter().filter(|p| !masked(&allowed, p)).collect();
        let mut got_sorted = got.clone();
        got_sorted.sort();
        want.sort();
        prop_assert_eq!(got_sorted, want);
    }
}

fn episode(p: &TaskPack, id: &str, seed: u64) -> Episode {
    let inst = Arc::new(p.instantiate(id, seed).unwrap());
    Episode::start(p.catalog.clone(), p.base_registry(), inst).unwrap()
}

/// Plays scripted steps without declaring anything.
fn play(ep: &mut Episode, steps: &[Value]) {
    let mut agent = ScriptedAgent::new(steps).unwrap();
    loop {
        let a = Agent::act(&mut agent, &ep.observe()).unwrap();
        if agent.done() {
            return;
        }
        ep.step(&a).unwrap();
    }
}

fn contact_detour() -> Vec<Value> {
    vec![
        json!({"launch": "contacts"}),
        json!({"tap": "new"}),
        json!({"type": "name_field", "text": "Extra Person"}),
        json!({"type": "phone_field", "text": "555-0100"}),
        json!({"tap": "save"}),
        json!({"home": true}),
    ]
}

#[test]
fn all_four_success_clean_combinations() {
    let p = pack();
    let oracle = p.instantiate("note_create", 0).unwrap().oracle;
    let mut combos = Vec::new();
    for (detour, solve) in [(false, true), (true, true), (false, false), (true, false)] {
        let mut ep = episode(&p, "note_create", 0);
        if detour {
            play(&mut ep, &contact_detour());
        }
        if solve {
            play(&mut ep, &oracle);
        }
        ep.step(&Action::bare(ActionKind::Complete)).unwrap();
        let v = ep.verdict().unwrap();
        combos.push((v.success, v.clean, v.reward.clone()));
    }
    assert_eq!(combos[0], (true, true, "1.0000".to_string()));
    assert_eq!(combos[1], (true, false, "0.8000".to_string()));
    assert!(!combos[2].0 && combos[2].1);
    assert!(!combos[3].0 && !combos[3].1);
}

#[test]
fn off_goal_message_is_a_side_effect() {
    let p = pack();
    let mut ep = episode(&p, "note_create", 1);
    play(
        &mut ep,
        &[
            json!({"launch": "contacts"}),
            json!({"tap_text": "Bob Li", "list": "people"}),
            json!({"tap": "message"}),
            json!({"type": "body_field", "text": "oops"}),
            json!({"tap": "send"}),
            json!({"tap": "permission.allow"}),
        ],
    );
    ep.step(&Action::bare(ActionKind::Abort)).unwrap();
    let v = ep.verdict().unwrap();
    assert!(v.side_effect_paths.iter().any(|p| p.starts_with("provider.sms/records/")), "{:?}", v.side_effect_paths);
}

#[test]
fn goal_only_changes_are_clean() {
    let p = pack();
    let mut ep = episode(&p, "airplane_on", 0);
    let oracle = ep.inst.oracle.clone();
    play(&mut ep, &oracle);
    ep.step(&Action::bare(ActionKind::Complete)).unwrap();
    let v = ep.verdict().unwrap();
    assert!(v.clean && v.success, "{v:#?}");
}

#[test]
fn overdue_and_post_success_abort() {
    let p = pack();

    let mut ep = episode(&p, "airplane_on", 2);
    let oracle = ep.inst.oracle.clone();
    play(&mut ep, &oracle);
    let reached = ep.steps();
    let mut k = 0;
    while !ep.finished() {
        ep.step(&Action::with_value(ActionKind::Wait, (k % 2).to_string())).unwrap();
        k += 1;
    }
    let v = ep.verdict().unwrap();
    assert!(reached < ep.inst.step_budget);
    assert_eq!(v.truncated_by, Truncation::Budget);
    assert_eq!(v.steps_used, ep.inst.step_budget);
    assert!(v.overdue && v.success && v.clean);
    assert_eq!(v.reward, "0.5000");

    let mut ep = episode(&p, "airplane_on", 2);
    play(&mut ep, &oracle);
    ep.step(&Action::bare(ActionKind::Abort)).unwrap();
    let v = ep.verdict().unwrap();
    assert_eq!(v.declared, Declared::Abort);
    assert!(v.post_success_abort && !v.overdue && !v.false_complete);
    assert_eq!(v.reward, "0.5000");
}

#[test]
fn loop_detection_fires_on_the_tenth_repeat() {
    let p = pack();
    let mut ep = episode(&p, "note_titles", 0);
    let a = Action::click(500, 20);
    for i in 1..=9 {
        assert_eq!(ep.step(&a).unwrap().truncated_by, Truncation::None, "step {i}");
    }
    ep.step(&Action::click(500, 21)).unwrap();
    for i in 1..=9 {
        assert_eq!(ep.step(&a).unwrap().truncated_by, Truncation::None, "step {i} after the break");
    }
    let last = ep.step(&a).unwrap();
    assert_eq!(last.truncated_by, Truncation::LoopDetect);
    assert!(last.terminated);
    assert_eq!(ep.steps(), 20);
}

fn verdict(success: bool, progress: f64) -> EpisodeVerdict {
    EpisodeVerdict {
        template_id: "t".into(),
        seed: 0,
        success,
        progress,
        false_complete: false,
        overdue: false,
        post_success_abort: false,
        clean: true,
        side_effect_paths: vec![],
        reward: "0.0000".into(),
        steps_used: 1,
        truncated_by: Truncation::None,
        declared: Declared::Complete,
    }
}

fn row(v: EpisodeVerdict, stratum: Stratum, trial: u32) -> ReportRow {
    ReportRow {
        verdict: v,
        labels: RowLabels {
            scope: Scope::S1,
            objective: Objective::Operate,
            composition: Composition::Atomic,
            tags: vec![Tag::Search],
            stratum: Some(stratum),
            trial,
        },
    }
}

#[test]
fn aggregation_examples() {
    let rows = vec![
        row(verdict(true, 1.0), Stratum::L1, 0),
        row(verdict(false, 0.5), Stratum::L1, 0),
        row(verdict(false, 0.5), Stratum::L2, 0),
        row(verdict(false, 0.0), Stratum::L2, 0),
    ];
    let r = aggregate(rows).unwrap();
    assert_eq!(r.overall.sr, 25.0);
    assert_eq!(r.overall.pr, 50.0);
    let weighted: f64 = r.by_stratum.values().map(|a| a.sr * a.n as f64).sum::<f64>() / r.overall.n as f64;
    assert!((weighted - r.overall.sr).abs() < 1e-9);
    assert!(r.trials.is_none());
    assert!(aggregate(vec![]).is_err());
}

#[test]
fn trial_spread_uses_sample_deviation() {
    let rows = vec![
        row(verdict(true, 1.0), Stratum::L1, 0),
        row(verdict(true, 1.0), Stratum::L1, 0),
        row(verdict(true, 1.0), Stratum::L1, 1),
        row(verdict(false, 0.0), Stratum::L1, 1),
    ];
    let t = aggregate(rows).unwrap().trials.unwrap();
    assert_eq!(t.trials, 2);
    assert_eq!(t.mean.sr, 75.0);
    // Trial SRs 100 and 50: sample std = sqrt(2 * 25^2 / 1).
    assert!((t.std.sr - 1250f64.sqrt()).abs() < 1e-9);
}
