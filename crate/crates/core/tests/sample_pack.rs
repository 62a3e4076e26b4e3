use std::path::PathBuf;
use std::sync::Arc;

use mgk_core::env::Declared;
use mgk_core::episode::Episode;
use mgk_core::metrics::{EpisodeVerdict, Truncation};
use mgk_core::os::ANSWER_SHEET_APP;
use mgk_core::script::{make_agent, AgentKind, ScriptedAgent};
use mgk_core::task::{lint_pack, load_pack, TaskPack};

fn pack_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sample")
}

fn run_oracle(pack: &TaskPack, id: &str, seed: u64) -> (EpisodeVerdict, Vec<String>) {
    let inst = Arc::new(pack.instantiate(id, seed).unwrap());
    let mut ep = Episode::start(pack.catalog.clone(), pack.base_registry(), inst.clone()).unwrap();
    let mut agent = ScriptedAgent::new(&inst.oracle).unwrap();
    let mut log = Vec::new();
    while !ep.finished() {
        let screen = ep.observe();
        let action = agent
            .act(&screen)
            .unwrap_or_else(|e| panic!("{id}/{seed}: {e}\nlog: {log:#?}\nscreen: {}", serde_json::to_string_pretty(&screen).unwrap()));
        log.push(serde_json::to_string(&action).unwrap());
        ep.step(&action).unwrap();
    }
    (ep.verdict().unwrap(), log)
}

#[test]
fn sample_pack_lints_clean() {
    let findings = lint_pack(&pack_dir());
    assert!(findings.is_empty(), "{findings:#?}");
    let pack = load_pack(&pack_dir()).unwrap();
    assert_eq!(pack.templates.len(), 16);
    let mut apps: Vec<&str> = pack.catalog.apps.keys().map(String::as_str).collect();
    apps.sort();
    assert_eq!(apps, [ANSWER_SHEET_APP, "contacts", "messages", "notes", "reader"]);
}

#[test]
fn oracle_solves_every_template() {
    let pack = load_pack(&pack_dir()).unwrap();
    for id in pack.templates.keys() {
        for seed in 0..6 {
            let (v, log) = run_oracle(&pack, id, seed);
            assert!(
                v.success && v.clean && v.reward == "1.0000",
                "{id}/{seed}: {v:#?}\nlog: {log:#?}"
            );
            assert!(v.steps_used <= pack.instantiate(id, seed).unwrap().step_budget);
        }
    }
}

fn run_kind(pack: &TaskPack, id: &str, seed: u64, kind: AgentKind) -> EpisodeVerdict {
    let inst = Arc::new(pack.instantiate(id, seed).unwrap());
    let mut ep = Episode::start(pack.catalog.clone(), pack.base_registry(), inst.clone()).unwrap();
    let apps: Vec<String> = pack.catalog.apps.keys().cloned().collect();
    let mut agent = make_agent(kind, &inst, ep.mask(), &apps).unwrap();
    ep.run(agent.as_mut()).unwrap_or_else(|e| panic!("{id}/{seed} {kind:?}: {e}"))
}

#[test]
fn sabotage_is_always_unclean() {
    let pack = load_pack(&pack_dir()).unwrap();
    for id in pack.templates.keys() {
        for seed in 0..3 {
            let v = run_kind(&pack, id, seed, AgentKind::Sabotage);
            assert!(!v.clean, "{id}/{seed}: {v:#?}");
            assert!(v.success, "{id}/{seed}: {v:#?}");
            assert_eq!(v.reward, "0.8000", "{id}/{seed}");
            let store = v.side_effect_paths[0].split('/').next().unwrap().to_string();
            assert!(v.side_effect_paths.iter().all(|p| p.starts_with(&store)), "{id}/{seed}: {:?}", v.side_effect_paths);
        }
    }
}

#[test]
fn degenerate_agents() {
    let pack = load_pack(&pack_dir()).unwrap();
    for id in pack.templates.keys() {
        let q = run_kind(&pack, id, 1, AgentKind::Quitter);
        assert!(!q.success && !q.false_complete && !q.post_success_abort, "{id}: {q:#?}");
        assert_eq!((q.steps_used, q.declared), (1, Declared::Abort));

        let p = run_kind(&pack, id, 1, AgentKind::Premature);
        assert!(p.false_complete && !p.success, "{id}: {p:#?}");
        assert!((p.reward_value() - 0.8 * p.progress).abs() < 1e-4, "{id}: {p:#?}");

        let l = run_kind(&pack, id, 1, AgentKind::Looper);
        assert_eq!((l.steps_used, l.truncated_by), (10, Truncation::LoopDetect), "{id}");
        assert!(!l.overdue);
    }
}

#[test]
fn random_agent_is_reproducible() {
    let pack = load_pack(&pack_dir()).unwrap();
    for id in pack.templates.keys() {
        for seed in 0..3 {
            let a = run_kind(&pack, id, seed, AgentKind::Random);
            let b = run_kind(&pack, id, seed, AgentKind::Random);
            assert_eq!(a, b);
            assert!(a.steps_used <= pack.instantiate(id, seed).unwrap().step_budget);
        }
    }
}
