//! App discovery: every `apps/<id>/manifest.json` under a pack directory
//! becomes an [`AppDef`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::hardware::HardwareState;
use super::intent::{IntentDecl, IntentRegistry};
use super::session::Session;
use super::OsError;
use crate::nav::NavSpec;
use crate::screen::ScreenSpec;
use crate::state::{StateRegistry, StoreSpec, Tier};

pub const ANSWER_SHEET_APP: &str = "answersheet";
pub const ANSWER_SHEET_STORE: &str = "answer_sheet";
pub const SETTINGS_STORE: &str = "os.settings";
pub const SESSION_STORE: &str = "os.session";
pub const VOLATILE_STORE: &str = "os.volatile";
pub const PROVIDERS: [&str; 3] = ["contacts", "sms", "media"];

/// Initial state name for apps without a navigation spec.
pub const SINGLE_SCREEN_STATE: &str = "main";

pub fn provider_store(provider: &str) -> String {
    format!("provider.{provider}")
}

pub fn world_store(app_id: &str) -> String {
    format!("world.{app_id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreDecl {
    #[serde(default = "overlay_tier")]
    pub tier: Tier,
    #[serde(default = "yes")]
    pub persisted: bool,
}

fn overlay_tier() -> Tier {
    Tier::RuntimeOverlay
}

fn yes() -> bool {
    true
}

impl Default for StoreDecl {
    fn default() -> Self {
        Self { tier: Tier::RuntimeOverlay, persisted: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIntent {
    #[serde(rename = "type")]
    pub intent_type: String,
    pub target_state: String,
    #[serde(default)]
    pub supports_result: bool,
    /// Overlay path (relative to the app store) receiving the payload.
    #[serde(default)]
    pub payload_slot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppManifest {
    pub app_id: String,
    pub label: String,
    #[serde(default)]
    pub system: bool,
    #[serde(default = "yes")]
    pub launcher: bool,
    #[serde(default)]
    pub intents: Vec<RawIntent>,
    #[serde(default)]
    pub nav_spec: Option<String>,
    #[serde(default)]
    pub screens: Option<String>,
    #[serde(default)]
    pub store: StoreDecl,
    #[serde(default)]
    pub defaults: Option<String>,
    #[serde(default)]
    pub world: Option<String>,
    /// Overlay subtrees holding UI scratch values (search boxes and the
    /// like); changes there are never side effects.
    #[serde(default)]
    pub transient: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AppDef {
    pub manifest: AppManifest,
    pub nav: Option<Arc<NavSpec>>,
    pub screens: Arc<ScreenSpec>,
    pub defaults: Value,
    pub world: Option<Arc<Value>>,
}

impl AppDef {
    pub fn id(&self) -> &str {
        &self.manifest.app_id
    }

    pub fn has_world(&self) -> bool {
        self.world.is_some()
    }

    fn answer_sheet() -> AppDef {
        AppDef {
            manifest: AppManifest {
                app_id: ANSWER_SHEET_APP.into(),
                label: "AnswerSheet".into(),
                system: true,
                launcher: true,
                intents: Vec::new(),
                nav_spec: None,
                screens: None,
                store: StoreDecl::default(),
                defaults: None,
                world: None,
                transient: Vec::new(),
            },
            nav: None,
            screens: Arc::new(ScreenSpec::default()),
            defaults: json!({}),
            world: None,
        }
    }
}

/// All apps of a pack plus OS-level initial data.
#[derive(Debug, Clone)]
pub struct AppCatalog {
    pub apps: BTreeMap<String, Arc<AppDef>>,
    pub intents: IntentRegistry,
    pub providers: BTreeMap<String, Value>,
    pub settings: Value,
}

fn read(path: &Path) -> Result<Vec<u8>, OsError> {
    fs::read(path).map_err(|e| OsError::Pack(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, OsError> {
    serde_json::from_slice(&read(path)?).map_err(|e| OsError::Pack(format!("{}: {e}", path.display())))
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, OsError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| OsError::Pack(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn default_settings() -> Value {
    json!({
        "hardware": serde_json::to_value(HardwareState::default()).expect("plain struct"),
        "permissions": {},
    })
}

fn empty_provider() -> Value {
    json!({"next_id": 1, "records": {}})
}

impl AppCatalog {
    /// Scans `<pack>/apps/*/manifest.json`, `<pack>/providers/<name>.json`
    /// and `<pack>/os/settings.json`.
    pub fn load(pack_dir: &Path) -> Result<AppCatalog, OsError> {
        let mut apps = BTreeMap::new();
        let apps_dir = pack_dir.join("apps");
        for dir in sorted_dirs(&apps_dir)? {
            let manifest_path = dir.join("manifest.json");
            if !manifest_path.is_file() {
                continue;
            }
            let manifest: AppManifest = serde_json::from_slice(&read(&manifest_path)?)
                .map_err(|e| OsError::Pack(format!("{}: {e}", manifest_path.display())))?;
            let nav = manifest
                .nav_spec
                .as_ref()
                .map(|p| {
                    let path = dir.join(p);
                    NavSpec::parse(&read(&path)?)
                        .map(Arc::new)
                        .map_err(|e| OsError::Pack(format!("{}: {e}", path.display())))
                })
                .transpose()?;
            let screens = match &manifest.screens {
                Some(p) => {
                    let path = dir.join(p);
                    ScreenSpec::parse(&read(&path)?)
                        .map_err(|e| OsError::Pack(format!("{}: {e}", path.display())))?
                }
                None => ScreenSpec::default(),
            };
            let defaults = match &manifest.defaults {
                Some(p) => read_json(&dir.join(p))?,
                None => json!({}),
            };
            let world = manifest.world.as_ref().map(|p| read_json(&dir.join(p)).map(Arc::new)).transpose()?;
            let def = AppDef { manifest, nav, screens: Arc::new(screens), defaults, world };
            apps.insert(def.id().to_string(), Arc::new(def));
        }
        let mut providers = BTreeMap::new();
        for name in PROVIDERS {
            let path = pack_dir.join("providers").join(format!("{name}.json"));
            let v = if path.is_file() { read_json(&path)? } else { empty_provider() };
            providers.insert(name.to_string(), v);
        }
        let settings_path = pack_dir.join("os").join("settings.json");
        let mut settings = default_settings();
        if settings_path.is_file() {
            merge_into(&mut settings, read_json(&settings_path)?);
        }
        Self::from_parts(apps, providers, settings)
    }

    pub fn from_parts(
        mut apps: BTreeMap<String, Arc<AppDef>>,
        providers: BTreeMap<String, Value>,
        settings: Value,
    ) -> Result<AppCatalog, OsError> {
        apps.entry(ANSWER_SHEET_APP.to_string()).or_insert_with(|| Arc::new(AppDef::answer_sheet()));
        let mut decls = Vec::new();
        for app in apps.values() {
            if app.manifest.store.tier != Tier::RuntimeOverlay {
                return Err(OsError::Pack(format!("{}: app stores must be runtime_overlay", app.id())));
            }
            for i in &app.manifest.intents {
                let known = match &app.nav {
                    Some(nav) => nav.state(&i.target_state).is_some(),
                    None => i.target_state == SINGLE_SCREEN_STATE,
                };
                if !known {
                    return Err(OsError::Pack(format!(
                        "{}: intent `{}` targets unknown state `{}`",
                        app.id(),
                        i.intent_type,
                        i.target_state
                    )));
                }
                decls.push(IntentDecl {
                    app_id: app.id().to_string(),
                    intent_type: i.intent_type.clone(),
                    target_state: i.target_state.clone(),
                    supports_result: i.supports_result,
                    payload_slot: i.payload_slot.clone(),
                });
            }
        }
        let intents = IntentRegistry::new(decls)?;
        Ok(AppCatalog { apps, intents, providers, settings })
    }

    pub fn app(&self, app_id: &str) -> Result<&Arc<AppDef>, OsError> {
        self.apps.get(app_id).ok_or_else(|| OsError::UnknownApp(app_id.to_string()))
    }

    /// Registry with every store of the pack at its initial value.
    pub fn build_registry(&self) -> Result<StateRegistry, OsError> {
        let mut reg = StateRegistry::new();
        for app in self.apps.values() {
            let mut spec = StoreSpec::new(app.id(), Tier::RuntimeOverlay, app.defaults.clone())
                .persisted(app.manifest.store.persisted);
            if let Some(world) = &app.world {
                let wid = world_store(app.id());
                reg.register(StoreSpec::new(wid.clone(), Tier::WorldData, world.as_ref().clone()))?;
                spec = spec.shadowing(wid);
            }
            reg.register(spec)?;
        }
        for (name, initial) in &self.providers {
            reg.register(StoreSpec::new(provider_store(name), Tier::RuntimeOverlay, initial.clone()))?;
        }
        reg.register(StoreSpec::new(ANSWER_SHEET_STORE, Tier::RuntimeOverlay, empty_answer_sheet()))?;
        reg.register(StoreSpec::new(SETTINGS_STORE, Tier::OsRuntime, self.settings.clone()))?;
        reg.register(
            StoreSpec::new(SESSION_STORE, Tier::OsRuntime, Session::default().to_value()).persisted(false),
        )?;
        reg.register(StoreSpec::new(VOLATILE_STORE, Tier::Volatile, json!({"clock_ms": 0})))?;
        Ok(reg)
    }
}

pub fn empty_answer_sheet() -> Value {
    json!({"fields": [], "drafts": {}, "values": {}, "submitted": false, "answer_events": []})
}

fn merge_into(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_into(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
