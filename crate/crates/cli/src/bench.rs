use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use mgk_core::metrics::{aggregate, BenchReport, EpisodeVerdict, ExpectedChangeMask, ReportRow, RowLabels};
use mgk_core::screen::{Action, ScreenModel};
use mgk_core::script::{make_agent, AgentKind};
use mgk_core::task::{Stratum, TaskPack};
use mgk_pool::wire::Op;
use mgk_pool::{Client, Pool, PoolConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::HarnessError;

fn default_seeds() -> u32 {
    4
}

fn default_parallelism() -> usize {
    1
}

/// What to run. Loadable from a JSON file; every field but `packs` has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub packs: Vec<PathBuf>,
    /// Template ids to run; empty runs all.
    #[serde(default)]
    pub templates: Vec<String>,
    /// Trials per template; trial `k` uses seed `k`.
    #[serde(default = "default_seeds")]
    pub seeds: u32,
    pub agent: AgentKind,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Stratum labels as written by `calibrate`.
    #[serde(default)]
    pub strata: Option<PathBuf>,
    /// Address of a running pool server; embedded pool when absent.
    #[serde(default)]
    pub remote: Option<String>,
}

impl RunConfig {
    pub fn new(packs: Vec<PathBuf>, agent: AgentKind) -> Self {
        Self {
            packs,
            templates: Vec::new(),
            seeds: default_seeds(),
            agent,
            out_dir: None,
            parallelism: default_parallelism(),
            strata: None,
            remote: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    fn check(&self) -> Result<(), HarnessError> {
        if self.seeds == 0 {
            return Err(HarnessError::Config("seeds must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(HarnessError::Config("parallelism must be at least 1".into()));
        }
        if self.packs.is_empty() {
            return Err(HarnessError::Config("no packs given".into()));
        }
        Ok(())
    }
}

struct Job {
    pack: Arc<TaskPack>,
    pack_name: String,
    template: String,
    trial: u32,
}

/// One worker's handle on the pool.
enum Conn {
    Embedded(Arc<Pool>),
    Remote(Client),
}

struct Stepped {
    screen: ScreenModel,
    terminated: bool,
}

fn decode<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, HarnessError> {
    serde_json::from_value(v).map_err(|e| HarnessError::PoolUnreachable(format!("unexpected reply: {e}")))
}

fn remote(e: mgk_pool::ClientError) -> HarnessError {
    match e {
        mgk_pool::ClientError::Remote(w) => HarnessError::Other(format!("{}: {}", w.code, w.message)),
        other => HarnessError::PoolUnreachable(other.to_string()),
    }
}

impl Conn {
    fn create(&mut self, pack: &str) -> Result<u64, HarnessError> {
        match self {
            Conn::Embedded(p) => Ok(p.create(Some(pack))?),
            Conn::Remote(c) => {
                let r = c.call(Op::Create, None, json!({"pack": pack})).map_err(remote)?;
                decode(r["instance_id"].clone())
            }
        }
    }

    fn reset(&mut self, id: u64, template: &str, seed: u64) -> Result<ScreenModel, HarnessError> {
        match self {
            Conn::Embedded(p) => Ok(p.reset(id, template, seed)?),
            Conn::Remote(c) => {
                let r = c.call(Op::Reset, Some(id), json!({"template_id": template, "seed": seed})).map_err(remote)?;
                decode(r["observation"].clone())
            }
        }
    }

    fn step(&mut self, id: u64, action: &Action) -> Result<Stepped, HarnessError> {
        match self {
            Conn::Embedded(p) => {
                let r = p.step(id, action)?;
                Ok(Stepped { screen: r.screen, terminated: r.terminated })
            }
            Conn::Remote(c) => {
                let r = c.call(Op::Step, Some(id), json!({"action": action})).map_err(remote)?;
                Ok(Stepped { screen: decode(r["observation"].clone())?, terminated: r["terminated"] == json!(true) })
            }
        }
    }

    fn judge(&mut self, id: u64) -> Result<EpisodeVerdict, HarnessError> {
        match self {
            Conn::Embedded(p) => Ok(p.judge(id)?),
            Conn::Remote(c) => decode(c.call(Op::Judge, Some(id), json!({})).map_err(remote)?),
        }
    }

    fn close(&mut self, id: u64) -> Result<(), HarnessError> {
        match self {
            Conn::Embedded(p) => Ok(p.close(id)?),
            Conn::Remote(c) => c.call(Op::Close, Some(id), json!({})).map(|_| ()).map_err(remote),
        }
    }
}

fn load_strata(path: &Path) -> Result<BTreeMap<String, Stratum>, HarnessError> {
    let c: crate::Calibration = serde_json::from_slice(&std::fs::read(path)?)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok(c.labels)
}

fn run_job(conn: &mut Conn, job: &Job, kind: AgentKind, strata: &BTreeMap<String, Stratum>) -> Result<ReportRow, HarnessError> {
    let seed = u64::from(job.trial);
    let inst = job.pack.instantiate(&job.template, seed).map_err(|e| HarnessError::PackInvalid(e.to_string()))?;
    let mask = ExpectedChangeMask::for_instance(&inst, &job.pack.catalog);
    let apps: Vec<String> = job.pack.catalog.apps.keys().cloned().collect();
    let mut agent = make_agent(kind, &inst, &mask, &apps)?;

    let id = conn.create(&job.pack_name)?;
    let mut screen = conn.reset(id, &job.template, seed)?;
    loop {
        let action = agent.act(&screen)?;
        let r = conn.step(id, &action)?;
        screen = r.screen;
        if r.terminated {
            break;
        }
    }
    let verdict = conn.judge(id)?;
    conn.close(id)?;

    let t = &inst.template;
    Ok(ReportRow {
        verdict,
        labels: RowLabels {
            scope: t.scope,
            objective: t.objective,
            composition: t.composition,
            tags: t.tags.clone(),
            stratum: strata.get(&job.template).copied(),
            trial: job.trial,
        },
    })
}

/// Runs every (template, trial) pair and aggregates the verdicts. Rows are
/// ordered by template then trial, whatever the parallelism.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchReport, HarnessError> {
    cfg.check()?;
    let embedded = match &cfg.remote {
        None => {
            let config = PoolConfig { max_instances: cfg.parallelism.max(1) * 2, ..PoolConfig::default() };
            Some(Arc::new(Pool::load(&cfg.packs, config).map_err(|e| HarnessError::PackInvalid(e.to_string()))?))
        }
        Some(_) => None,
    };
    let packs: Vec<(String, Arc<TaskPack>)> = match &embedded {
        Some(p) => p.packs().iter().map(|(k, v)| (k.clone(), Arc::clone(v))).collect(),
        None => cfg
            .packs
            .iter()
            .map(|d| {
                let p = mgk_core::task::load_pack(d).map_err(|e| HarnessError::PackInvalid(e.to_string()))?;
                Ok((p.manifest.name.clone(), Arc::new(p)))
            })
            .collect::<Result<_, HarnessError>>()?,
    };
    let strata = match &cfg.strata {
        Some(p) => load_strata(p)?,
        None => BTreeMap::new(),
    };

    let mut jobs = Vec::new();
    for (name, pack) in &packs {
        for t in pack.templates.keys() {
            if !cfg.templates.is_empty() && !cfg.templates.contains(t) {
                continue;
            }
            for trial in 0..cfg.seeds {
                jobs.push(Job { pack: Arc::clone(pack), pack_name: name.clone(), template: t.clone(), trial });
            }
        }
    }
    for wanted in &cfg.templates {
        if !packs.iter().any(|(_, p)| p.templates.contains_key(wanted)) {
            return Err(HarnessError::PackInvalid(format!("unknown template {wanted}")));
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ReportRow, HarnessError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cfg.parallelism.min(jobs.len().max(1)) {
            s.spawn(|| {
                let conn = match (&embedded, &cfg.remote) {
                    (Some(p), _) => Ok(Conn::Embedded(Arc::clone(p))),
                    (None, Some(addr)) => Client::connect(addr).map(Conn::Remote).map_err(|e| HarnessError::PoolUnreachable(e.to_string())),
                    (None, None) => unreachable!("one backend is always chosen"),
                };
                let mut conn = match conn {
                    Ok(c) => c,
                    Err(e) => {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i < jobs.len() {
                            results.lock().expect("no panics while held")[i] = Some(Err(e));
                        }
                        return;
                    }
                };
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let r = run_job(&mut conn, job, cfg.agent, &strata);
                    results.lock().expect("no panics while held")[i] = Some(r);
                }
            });
        }
    });

    let mut rows = Vec::with_capacity(jobs.len());
    for (i, r) in results.into_inner().expect("workers joined").into_iter().enumerate() {
        match r {
            Some(r) => rows.push(r?),
            None => return Err(HarnessError::Other(format!("job {i} was never run"))),
        }
    }
    rows.sort_by(|a, b| (&a.verdict.template_id, a.labels.trial).cmp(&(&b.verdict.template_id, b.labels.trial)));
    aggregate(rows).map_err(|e| HarnessError::Other(e.to_string()))
}
