use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use mgk_core::env::Environment;
use mgk_core::episode::{Episode, StepReport};
use mgk_core::metrics::{EpisodeVerdict, ExpectedChangeMask};
use mgk_core::screen::{Action, ScreenError, ScreenModel};
use mgk_core::state::Snapshot;
use mgk_core::task::{lint_pack, load_pack, TaskError, TaskInstance, TaskPack};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fifo::FifoMutex;
use crate::stats::{resident_bytes, Latencies, PoolStats};
use crate::wire::{Op, WireRequest, WireResponse};
use crate::{PoolConfig, PoolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Idle,
    InEpisode,
    Terminated,
    Closed,
}

#[derive(Debug, Clone)]
enum Mode {
    /// At the launcher, no task bound.
    Idle(Box<Environment>),
    Episode(Box<Episode>),
}

#[derive(Debug, Clone)]
struct Instance {
    pack: Arc<TaskPack>,
    mode: Mode,
}

impl Instance {
    fn fresh(pack: Arc<TaskPack>) -> Self {
        let env = Environment::from_registry(pack.catalog.clone(), pack.base_registry().clone());
        Self { pack, mode: Mode::Idle(Box::new(env)) }
    }

    fn status(&self) -> InstanceStatus {
        match &self.mode {
            Mode::Idle(_) => InstanceStatus::Idle,
            Mode::Episode(ep) if ep.finished() => InstanceStatus::Terminated,
            Mode::Episode(_) => InstanceStatus::InEpisode,
        }
    }

    fn env_mut(&mut self) -> &mut Environment {
        match &mut self.mode {
            Mode::Idle(env) => env,
            Mode::Episode(ep) => &mut ep.env,
        }
    }

    fn observe(&self) -> ScreenModel {
        match &self.mode {
            Mode::Idle(env) => env.render(),
            Mode::Episode(ep) => ep.observe(),
        }
    }

    fn episode(&mut self) -> Result<&mut Episode, PoolError> {
        match &mut self.mode {
            Mode::Episode(ep) => Ok(ep),
            Mode::Idle(_) => Err(PoolError::NotInEpisode),
        }
    }
}

type Slot = Arc<FifoMutex<Instance>>;

/// Many isolated environment instances behind one handle. Requests on one
/// instance run one at a time in arrival order; different instances run in
/// parallel.
pub struct Pool {
    packs: BTreeMap<String, Arc<TaskPack>>,
    config: PoolConfig,
    instances: RwLock<HashMap<u64, Slot>>,
    next_id: AtomicU64,
    step_latency: Mutex<Latencies>,
    create_latency: Mutex<Latencies>,
    replies: Mutex<(HashMap<String, WireResponse>, VecDeque<String>)>,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("pool payloads serialize")
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Pool {
    /// Pool over already-loaded packs, keyed by name.
    pub fn new(packs: BTreeMap<String, Arc<TaskPack>>, config: PoolConfig) -> Self {
        Self {
            packs,
            config,
            instances: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            step_latency: Mutex::default(),
            create_latency: Mutex::default(),
            replies: Mutex::default(),
        }
    }

    pub fn single(pack: TaskPack, config: PoolConfig) -> Self {
        let name = pack.manifest.name.clone();
        Self::new(BTreeMap::from([(name, Arc::new(pack))]), config)
    }

    /// Lints and loads each pack directory. Any lint finding rejects the
    /// whole set.
    pub fn load(dirs: &[impl AsRef<Path>], config: PoolConfig) -> Result<Self, PoolError> {
        let mut packs = BTreeMap::new();
        for dir in dirs {
            let dir = dir.as_ref();
            let findings = lint_pack(dir);
            if !findings.is_empty() {
                let text: Vec<String> = findings.iter().map(|f| f.to_string()).collect();
                return Err(PoolError::PackInvalid(format!("{}: {}", dir.display(), text.join("; "))));
            }
            let pack = load_pack(dir).map_err(|e| PoolError::PackInvalid(e.to_string()))?;
            packs.insert(pack.manifest.name.clone(), Arc::new(pack));
        }
        if packs.is_empty() {
            return Err(PoolError::PackInvalid("no packs given".into()));
        }
        Ok(Self::new(packs, config))
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn packs(&self) -> &BTreeMap<String, Arc<TaskPack>> {
        &self.packs
    }

    fn pick_pack(&self, name: Option<&str>) -> Result<Arc<TaskPack>, PoolError> {
        match name {
            Some(n) => self.packs.get(n).cloned().ok_or_else(|| PoolError::PackInvalid(format!("unknown pack {n}"))),
            None if self.packs.len() == 1 => Ok(self.packs.values().next().expect("one").clone()),
            None => Err(PoolError::PackInvalid("several packs loaded; name one".into())),
        }
    }

    fn slot(&self, id: u64) -> Result<Slot, PoolError> {
        let map = self.instances.read().unwrap_or_else(|p| p.into_inner());
        map.get(&id).cloned().ok_or(PoolError::UnknownInstance(id))
    }

    fn memory_full(&self) -> bool {
        match (self.config.memory_cap_mb, resident_bytes()) {
            (Some(cap), Some(rss)) => rss >= cap << 20,
            _ => false,
        }
    }

    /// Inserts instances all-or-nothing, checking the caps first.
    fn admit(&self, items: Vec<Instance>) -> Result<Vec<u64>, PoolError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        if self.memory_full() {
            return Err(PoolError::PoolFull(format!("resident memory at the {} MiB cap", self.config.memory_cap_mb.unwrap_or(0))));
        }
        let mut map = self.instances.write().unwrap_or_else(|p| p.into_inner());
        if map.len() + items.len() > self.config.max_instances {
            return Err(PoolError::PoolFull(format!("{} of {} instances in use", map.len(), self.config.max_instances)));
        }
        let ids: Vec<u64> = items
            .into_iter()
            .map(|inst| {
                let id = self.next_id.fetch_add(1, Ordering::SeqCst);
                map.insert(id, Arc::new(FifoMutex::new(inst)));
                id
            })
            .collect();
        Ok(ids)
    }

    /// New idle instance at the launcher.
    pub fn create(&self, pack: Option<&str>) -> Result<u64, PoolError> {
        let started = Instant::now();
        let pack = self.pick_pack(pack)?;
        let id = self.admit(vec![Instance::fresh(pack)])?[0];
        lock(&self.create_latency).record(started.elapsed());
        Ok(id)
    }

    /// Binds a fresh task instance and returns the first observation.
    pub fn reset(&self, id: u64, template_id: &str, seed: u64) -> Result<ScreenModel, PoolError> {
        let slot = self.slot(id)?;
        let mut inst = slot.lock();
        let task = inst.pack.instantiate(template_id, seed).map_err(|e| match e {
            TaskError::UnknownTemplate(t) => PoolError::UnknownTemplate(t),
            other => PoolError::Internal(other.to_string()),
        })?;
        let ep = Episode::start(inst.pack.catalog.clone(), inst.pack.base_registry(), Arc::new(task))
            .map_err(|e| PoolError::Internal(e.to_string()))?;
        inst.mode = Mode::Episode(Box::new(ep));
        Ok(inst.observe())
    }

    pub fn step(&self, id: u64, action: &Action) -> Result<StepReport, PoolError> {
        let slot = self.slot(id)?;
        let mut inst = slot.lock();
        let started = Instant::now();
        let ep = inst.episode()?;
        let report = ep.step(action).map_err(|e| match e {
            ScreenError::ActionAfterTermination => PoolError::NotInEpisode,
            ScreenError::MalformedAction(m) => PoolError::MalformedAction(m),
            ScreenError::OutOfBounds => PoolError::MalformedAction(e.to_string()),
            other => PoolError::Internal(other.to_string()),
        })?;
        if self.config.settle_delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.config.settle_delay_ms));
        }
        lock(&self.step_latency).record(started.elapsed());
        Ok(report)
    }

    pub fn observe(&self, id: u64) -> Result<(ScreenModel, InstanceStatus, u32), PoolError> {
        let slot = self.slot(id)?;
        let inst = slot.lock();
        let steps = match &inst.mode {
            Mode::Episode(ep) => ep.steps(),
            Mode::Idle(_) => 0,
        };
        Ok((inst.observe(), inst.status(), steps))
    }

    pub fn status(&self, id: u64) -> Result<InstanceStatus, PoolError> {
        Ok(self.slot(id)?.lock().status())
    }

    pub fn snapshot(&self, id: u64) -> Result<Snapshot, PoolError> {
        Ok(self.slot(id)?.lock().env_mut().snapshot())
    }

    /// Rewinds device state to `snap`. Episode counters (steps, loop ring,
    /// truncation) are not rewound.
    pub fn restore(&self, id: u64, snap: &Snapshot) -> Result<ScreenModel, PoolError> {
        let slot = self.slot(id)?;
        let mut inst = slot.lock();
        inst.env_mut().restore(snap).map_err(|e| PoolError::MalformedRequest(e.to_string()))?;
        Ok(inst.observe())
    }

    /// `k` independent copies of the instance as it is now, episode
    /// included.
    pub fn fork_group(&self, id: u64, k: usize) -> Result<Vec<u64>, PoolError> {
        let slot = self.slot(id)?;
        let source = slot.lock().clone();
        self.admit(vec![source; k])
    }

    pub fn judge(&self, id: u64) -> Result<EpisodeVerdict, PoolError> {
        let slot = self.slot(id)?;
        let mut inst = slot.lock();
        let ep = inst.episode()?;
        if !ep.finished() {
            return Err(PoolError::EpisodeStillRunning);
        }
        ep.verdict().map_err(|e| PoolError::Internal(e.to_string()))
    }

    /// The bound task and its expected-change mask, for agents that need them.
    pub fn task(&self, id: u64) -> Result<(Arc<TaskInstance>, ExpectedChangeMask), PoolError> {
        let slot = self.slot(id)?;
        let mut inst = slot.lock();
        let ep = inst.episode()?;
        Ok((ep.inst.clone(), ep.mask().clone()))
    }

    pub fn close(&self, id: u64) -> Result<(), PoolError> {
        let slot = self.slot(id)?;
        // Wait for in-flight requests on this instance before dropping it.
        let _turn = slot.lock();
        self.instances.write().unwrap_or_else(|p| p.into_inner()).remove(&id);
        Ok(())
    }

    pub fn stats(&self) -> PoolStats {
        let slots: Vec<Slot> = self.instances.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
        let in_episode = slots.iter().filter(|s| s.lock().status() == InstanceStatus::InEpisode).count();
        let steps = lock(&self.step_latency);
        let creates = lock(&self.create_latency);
        PoolStats {
            instances: slots.len(),
            in_episode,
            max_instances: self.config.max_instances,
            memory_bytes: resident_bytes(),
            steps_total: steps.total(),
            step_p50_us: steps.percentile(0.5),
            step_p99_us: steps.percentile(0.99),
            creates_total: creates.total(),
            create_p50_us: creates.percentile(0.5),
            create_p99_us: creates.percentile(0.99),
        }
    }

    /// Handles one wire request, answering a replayed token from the cache.
    pub fn handle(&self, req: &WireRequest) -> WireResponse {
        if req.token.is_empty() {
            return WireResponse::failure(&PoolError::MalformedRequest("missing idempotency token".into()));
        }
        if let Some(hit) = lock(&self.replies).0.get(&req.token) {
            return hit.clone();
        }
        let resp = match self.execute(req) {
            Ok(v) => WireResponse::success(v),
            Err(e) => WireResponse::failure(&e),
        };
        let mut cache = lock(&self.replies);
        let (map, order) = &mut *cache;
        if let Some(first) = map.get(&req.token) {
            // A concurrent duplicate finished first; keep its answer.
            return first.clone();
        }
        map.insert(req.token.clone(), resp.clone());
        order.push_back(req.token.clone());
        while order.len() > self.config.idempotency_cache {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
        resp
    }

    /// Handles raw request bytes; unparseable input gets an error response.
    pub fn handle_bytes(&self, body: &[u8]) -> WireResponse {
        match serde_json::from_slice::<WireRequest>(body) {
            Ok(req) => self.handle(&req),
            Err(e) => WireResponse::failure(&PoolError::MalformedRequest(e.to_string())),
        }
    }

    fn execute(&self, req: &WireRequest) -> Result<Value, PoolError> {
        let id = || req.instance_id.ok_or_else(|| PoolError::MalformedRequest("instance_id required".into()));
        let field = |name: &str| {
            req.payload.get(name).ok_or_else(|| PoolError::MalformedRequest(format!("payload.{name} required")))
        };
        Ok(match req.op {
            Op::Create => {
                let pack = req.payload.get("pack").and_then(Value::as_str);
                json!({"instance_id": self.create(pack)?})
            }
            Op::Reset => {
                let template = field("template_id")?
                    .as_str()
                    .ok_or_else(|| PoolError::MalformedRequest("template_id must be a string".into()))?;
                let seed = field("seed")?
                    .as_u64()
                    .ok_or_else(|| PoolError::MalformedRequest("seed must be a non-negative integer".into()))?;
                json!({"observation": to_json(&self.reset(id()?, template, seed)?)})
            }
            Op::Step => {
                let action: Action = serde_json::from_value(field("action")?.clone())
                    .map_err(|e| PoolError::MalformedAction(e.to_string()))?;
                let r = self.step(id()?, &action)?;
                json!({
                    "observation": to_json(&r.screen),
                    "terminated": r.terminated,
                    "truncated_by": to_json(&r.truncated_by),
                    "step": r.step,
                })
            }
            Op::Observe => {
                let (screen, status, steps) = self.observe(id()?)?;
                json!({"observation": to_json(&screen), "status": to_json(&status), "step_count": steps})
            }
            Op::Snapshot => {
                let s = self.snapshot(id()?)?;
                json!({"version": s.version(), "snapshot": s.to_value()})
            }
            Op::Restore => {
                let snap = Snapshot::from_value(0, field("snapshot")?.clone())
                    .map_err(|e| PoolError::MalformedRequest(e.to_string()))?;
                json!({"observation": to_json(&self.restore(id()?, &snap)?)})
            }
            Op::ForkGroup => {
                let k = field("k")?
                    .as_u64()
                    .ok_or_else(|| PoolError::MalformedRequest("k must be a non-negative integer".into()))?;
                json!({"instance_ids": self.fork_group(id()?, k as usize)?})
            }
            Op::Judge => to_json(&self.judge(id()?)?),
            Op::Close => {
                self.close(id()?)?;
                json!({"status": to_json(&InstanceStatus::Closed)})
            }
            Op::PoolStats => to_json(&self.stats()),
        })
    }
}
