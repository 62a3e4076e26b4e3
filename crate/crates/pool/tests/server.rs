use std::path::PathBuf;
use std::sync::{Arc, Barrier};
use std::thread;

use mgk_pool::wire::{Op, WireRequest};
use mgk_pool::{serve, Client, Pool, PoolConfig, PoolError};
use serde_json::json;

fn start() -> (mgk_pool::ServerHandle, String) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sample");
    let pool = Arc::new(Pool::load(&[dir], PoolConfig::default()).unwrap());
    let h = serve(pool, "127.0.0.1:0").unwrap();
    let addr = h.local_addr().to_string();
    (h, addr)
}

fn new_episode(c: &mut Client, template: &str) -> u64 {
    let id = c.call(Op::Create, None, json!({})).unwrap()["instance_id"].as_u64().unwrap();
    c.call(Op::Reset, Some(id), json!({"template_id": template, "seed": 0})).unwrap();
    id
}

#[test]
fn clients_on_different_instances_progress() {
    let (h, addr) = start();
    let workers: Vec<_> = (0..4)
        .map(|_| {
            let addr = addr.clone();
            thread::spawn(move || {
                let mut c = Client::connect(&addr).unwrap();
                let id = new_episode(&mut c, "airplane_on");
                for k in 0..5 {
                    c.call(Op::Step, Some(id), json!({"action": {"kind": "WAIT", "value": (k % 2).to_string()}})).unwrap();
                }
                c.call(Op::Observe, Some(id), json!({})).unwrap()["step_count"].as_u64().unwrap()
            })
        })
        .collect();
    for w in workers {
        assert_eq!(w.join().unwrap(), 5);
    }
    let mut c = Client::connect(&addr).unwrap();
    let stats = c.call(Op::PoolStats, None, json!({})).unwrap();
    assert_eq!(stats["instances"], json!(4));
    assert!(stats["step_p99_us"].as_u64().is_some());
    h.shutdown();
}

#[test]
fn requests_on_one_instance_are_serialized() {
    let (h, addr) = start();
    let mut c = Client::connect(&addr).unwrap();
    let id = new_episode(&mut c, "note_create");
    let n = 8;
    let gate = Arc::new(Barrier::new(n));
    let workers: Vec<_> = (0..n)
        .map(|k| {
            let (addr, gate) = (addr.clone(), Arc::clone(&gate));
            thread::spawn(move || {
                let mut c = Client::connect(&addr).unwrap();
                gate.wait();
                let r = c.call(Op::Step, Some(id), json!({"action": {"kind": "WAIT", "value": k.to_string()}})).unwrap();
                r["step"].as_u64().unwrap()
            })
        })
        .collect();
    let mut steps: Vec<u64> = workers.into_iter().map(|w| w.join().unwrap()).collect();
    steps.sort();
    assert_eq!(steps, (1..=n as u64).collect::<Vec<_>>());
    h.shutdown();
}

#[test]
fn replay_and_errors_over_tcp() {
    let (h, addr) = start();
    let mut c = Client::connect(&addr).unwrap();
    let id = new_episode(&mut c, "note_create");
    let step = WireRequest { op: Op::Step, instance_id: Some(id), payload: json!({"action": {"kind": "HOME"}}), token: "once".into() };
    let a = c.send(&step).unwrap();
    let b = c.send(&step).unwrap();
    assert_eq!(a, b);
    assert_eq!(c.call(Op::Observe, Some(id), json!({})).unwrap()["step_count"], json!(1));

    let garbage = c.send_raw(b"{\"op\":").unwrap();
    assert_eq!(garbage.error.unwrap().code, "MALFORMED_REQUEST");
    let err = c.call(Op::Judge, Some(id), json!({})).unwrap_err();
    assert_eq!(err.code(), Some("EPISODE_STILL_RUNNING"));
    let err = c.call(Op::Observe, Some(4242), json!({})).unwrap_err();
    assert_eq!(err.code(), Some("UNKNOWN_INSTANCE"));
    h.shutdown();
}

#[test]
fn bind_failure_is_reported() {
    let (h, addr) = start();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sample");
    let pool = Arc::new(Pool::load(&[dir], PoolConfig::default()).unwrap());
    assert!(matches!(serve(pool, &addr), Err(PoolError::BindFailure { .. })));
    h.shutdown();
}
