//! Android-like OS runtime over the state registry: task stacks driven by a
//! reducer, back dispatch, intents, content providers, a broadcast bus and
//! hardware managers.
//!
//! All OS state that must survive fork and restore lives in stores
//! (`os.settings`, `os.session`); [`Os`] itself only holds the app catalog,
//! bus receivers and the back dispatcher.

mod back;
mod bus;
mod catalog;
mod hardware;
mod intent;
pub mod provider;
mod session;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use back::{
    BackDispatcher, BackHandler, Consume, HOME, PRIORITY_APP_PAGE, PRIORITY_DESKTOP, PRIORITY_KEYBOARD,
    PRIORITY_PERMISSION, PRIORITY_SHADE,
};
pub use bus::{Broadcast, BroadcastBus, Delivery, Receiver};
pub use catalog::{
    empty_answer_sheet, provider_store, world_store, AppCatalog, AppDef, AppManifest, RawIntent, StoreDecl,
    ANSWER_SHEET_APP, ANSWER_SHEET_STORE, PROVIDERS, SESSION_STORE, SETTINGS_STORE, SINGLE_SCREEN_STATE,
    VOLATILE_STORE,
};
pub use hardware::{HardwareState, HARDWARE_FIELDS};
pub use intent::{IntentDecl, IntentRegistry, Resolution};
pub use provider::{CrudOp, ProviderResult};
pub use session::{
    ChooserState, Notification, PendingResult, PermissionRequest, ResultRequest, Session, TaskStack,
};

use crate::nav::{Firing, NavCursor, NavError, ProviderCall, ProviderOp, TransitionHost, UiStateId};
use crate::state::{display_text, parse_index, StateError, StateRegistry, StateValue};

pub const PRIORITY_CHOOSER: i32 = 750;
pub const PRIORITY_RECENTS: i32 = 720;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OsError {
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("unknown task {0}")]
    UnknownTask(u64),
    #[error("no foreground task")]
    NoForegroundTask,
    #[error("cannot pop the root activity")]
    PopOnRootActivity,
    #[error("app `{app}` has no state `{state}`")]
    UnknownState { app: String, state: String },
    #[error("no handler for intent `{0}`")]
    NoHandler(String),
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("provider `{provider}` has no record `{id}`")]
    UnknownRecord { provider: String, id: String },
    #[error("provider `{0}`: operation needs a record id")]
    MissingRecordId(String),
    #[error("`{field}` cannot take {value}")]
    OutOfDomain { field: String, value: String },
    #[error("cannot enable `{0}` while airplane mode is on")]
    AirplaneModeActive(String),
    #[error("unknown hardware field `{0}`")]
    UnknownHardwareField(String),
    #[error("back priority {0} outside (0, 1000)")]
    InvalidPriority(i32),
    #[error("app `{0}` is not in the foreground")]
    NotForeground(String),
    #[error("no chooser is showing")]
    NoChooser,
    #[error("`{0}` is not a chooser candidate")]
    NotACandidate(String),
    #[error("pack: {0}")]
    Pack(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Nav(#[from] NavError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OsRequest {
    LaunchApp { app_id: String },
    GoHome,
    ShowRecents,
    CloseTask { task_id: u64 },
    PushActivity { state: UiStateId },
    PopActivity,
}

/// Observable consequence of an OS operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum OsEvent {
    TaskCreated { task_id: u64, app_id: String },
    TaskForegrounded { task_id: u64 },
    TaskBackgrounded { task_id: u64 },
    TaskClosed { task_id: u64 },
    ActivityPushed { task_id: u64, state: UiStateId },
    ActivityPopped { task_id: u64 },
    RecentsShown,
    Navigated { app_id: String, transition: String, from: UiStateId, to: UiStateId },
    NavigatedBack { app_id: String, to: UiStateId },
    ChooserShown { intent_type: String, candidates: Vec<String> },
    ChooserCancelled,
    PermissionRequested { app_id: String, permission: String },
    PermissionDismissed,
    PermissionGranted { app_id: String, permission: String },
    ResultPending { token: u64, callee_task: u64 },
    ResultDelivered { token: u64, caller_task: u64 },
    CalleeClosedWithoutResult { token: u64, caller_task: u64 },
    ProviderChanged { provider: String, op: CrudOp, id: String },
    ShadeOpened,
    ShadeClosed,
    RecentsClosed,
    KeyboardHidden,
    Home,
}

/// Writes `value` at `rel` below an app store, creating missing maps.
pub(crate) fn write_creating(
    reg: &mut StateRegistry,
    store: &str,
    rel: &str,
    value: StateValue,
) -> Result<(), OsError> {
    let mut root = reg.store_value(store)?.clone();
    let segs: Vec<&str> = rel.split('/').filter(|s| !s.is_empty()).collect();
    let Some((last, parents)) = segs.split_last() else {
        reg.replace_store(store, value)?;
        return Ok(());
    };
    let mut at = &mut root;
    for seg in parents {
        at = match at {
            Value::Object(m) => m.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new())),
            Value::Array(items) => parse_index(seg)
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| StateError::PathTypeMismatch(format!("{store}/{rel}")))?,
            _ => return Err(StateError::PathTypeMismatch(format!("{store}/{rel}")).into()),
        };
    }
    match at {
        Value::Object(m) => {
            m.insert(last.to_string(), value);
        }
        Value::Array(items) => {
            let slot = parse_index(last)
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| StateError::PathTypeMismatch(format!("{store}/{rel}")))?;
            *slot = value;
        }
        _ => return Err(StateError::PathTypeMismatch(format!("{store}/{rel}")).into()),
    }
    reg.replace_store(store, root)?;
    Ok(())
}

/// Bridges a navigation firing onto registry stores.
struct RegistryHost<'a> {
    reg: &'a mut StateRegistry,
    app: &'a AppDef,
    changes: Vec<(String, CrudOp, ProviderResult)>,
}

impl TransitionHost for RegistryHost<'_> {
    fn app_state(&self) -> StateValue {
        self.reg.store_value(self.app.id()).cloned().unwrap_or(Value::Null)
    }

    fn data(&self) -> StateValue {
        if self.app.has_world() {
            self.reg.get(&world_store(self.app.id())).unwrap_or(Value::Null)
        } else {
            self.app_state()
        }
    }

    fn commit(&mut self, app_state: Option<StateValue>, calls: Vec<ProviderCall>) -> Result<(), NavError> {
        let cp = self.reg.checkpoint();
        let mut applied = Vec::new();
        let outcome = (|| -> Result<(), OsError> {
            if let Some(v) = app_state {
                self.reg.replace_store(self.app.id(), v)?;
            }
            for c in calls {
                let op = match c.op {
                    ProviderOp::Create => CrudOp::Create,
                    ProviderOp::Update => CrudOp::Update,
                    ProviderOp::Delete => CrudOp::Delete,
                };
                let r = provider::execute(self.reg, &c.provider, op, c.id.as_deref(), c.record)?;
                applied.push((c.provider, op, r));
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => {
                self.changes.extend(applied);
                Ok(())
            }
            Err(e) => {
                self.reg.rollback(cp);
                Err(NavError::Host(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FireOutcome {
    Fired(Firing),
    PermissionRequested,
}

/// The OS kernel of one environment instance.
#[derive(Debug, Clone)]
pub struct Os {
    catalog: Arc<AppCatalog>,
    pub bus: BroadcastBus,
    back: BackDispatcher<Session>,
}

fn app_page_consumes(s: &Session) -> bool {
    s.foreground_task().is_some_and(|t| t.activities.len() > 1 || !t.top().history.is_empty())
}

impl Os {
    pub fn new(catalog: Arc<AppCatalog>) -> Self {
        let mut back = BackDispatcher::default();
        back.register_system("permission_dialog", PRIORITY_PERMISSION, Arc::new(|s: &Session| s.permission.is_some()));
        back.register_system("system_shade", PRIORITY_SHADE, Arc::new(|s: &Session| s.shade_open));
        back.register_system("chooser", PRIORITY_CHOOSER, Arc::new(|s: &Session| s.chooser.is_some()));
        back.register_system("recents", PRIORITY_RECENTS, Arc::new(|s: &Session| s.recents_open));
        back.register_system("keyboard", PRIORITY_KEYBOARD, Arc::new(|s: &Session| s.keyboard));
        back.register_system("app_page", PRIORITY_APP_PAGE, Arc::new(app_page_consumes));
        Self { catalog, bus: BroadcastBus::default(), back }
    }

    pub fn catalog(&self) -> &Arc<AppCatalog> {
        &self.catalog
    }

    pub fn session(&self, reg: &StateRegistry) -> Result<Session, OsError> {
        let v = reg.store_value(SESSION_STORE)?;
        serde_json::from_value(v.clone()).map_err(|e| OsError::State(StateError::Parse(e.to_string())))
    }

    pub fn put_session(&self, reg: &mut StateRegistry, s: &Session) -> Result<(), OsError> {
        reg.replace_store(SESSION_STORE, s.to_value())?;
        Ok(())
    }

    pub(crate) fn with_session<T>(
        &mut self,
        reg: &mut StateRegistry,
        f: impl FnOnce(&mut Self, &mut StateRegistry, &mut Session) -> Result<T, OsError>,
    ) -> Result<T, OsError> {
        let cp = reg.checkpoint();
        let mut s = self.session(reg)?;
        match f(self, reg, &mut s) {
            Ok(v) => {
                self.put_session(reg, &s)?;
                Ok(v)
            }
            Err(e) => {
                reg.rollback(cp);
                Err(e)
            }
        }
    }

    // ---- hardware and permissions ----

    pub fn hardware(&self, reg: &StateRegistry) -> Result<HardwareState, OsError> {
        let v = reg.get(&format!("{SETTINGS_STORE}/hardware"))?;
        serde_json::from_value(v).map_err(|e| OsError::State(StateError::Parse(e.to_string())))
    }

    pub fn set_hardware(&self, reg: &mut StateRegistry, field: &str, value: &Value) -> Result<HardwareState, OsError> {
        let mut h = self.hardware(reg)?;
        h.set(field, value)?;
        reg.set(&format!("{SETTINGS_STORE}/hardware"), serde_json::to_value(&h).expect("plain struct"))?;
        Ok(h)
    }

    pub fn granted(&self, reg: &StateRegistry, app_id: &str, permission: &str) -> bool {
        reg.get(&format!("{SETTINGS_STORE}/permissions/{app_id}"))
            .ok()
            .and_then(|v| v.as_array().map(|a| a.iter().any(|p| p.as_str() == Some(permission))))
            .unwrap_or(false)
    }

    fn grant(&self, reg: &mut StateRegistry, app_id: &str, permission: &str) -> Result<(), OsError> {
        if self.granted(reg, app_id, permission) {
            return Ok(());
        }
        let path = format!("permissions/{app_id}");
        let mut list = reg
            .get(&format!("{SETTINGS_STORE}/{path}"))
            .ok()
            .and_then(|v| v.as_array().cloned())
            .unwrap_or_default();
        list.push(Value::String(permission.to_string()));
        list.sort_by(|a, b| a.as_str().cmp(&b.as_str()));
        write_creating(reg, SETTINGS_STORE, &path, Value::Array(list))
    }

    // ---- reducer ----

    pub fn dispatch(&mut self, reg: &mut StateRegistry, req: OsRequest) -> Result<Vec<OsEvent>, OsError> {
        self.with_session(reg, |os, reg, s| os.reduce(reg, s, req))
    }

    fn initial_cursor(&self, app: &AppDef) -> NavCursor {
        match &app.nav {
            Some(nav) => NavCursor::new(nav),
            None => NavCursor::at(UiStateId::new(SINGLE_SCREEN_STATE)),
        }
    }

    pub(crate) fn reduce(
        &mut self,
        reg: &mut StateRegistry,
        s: &mut Session,
        req: OsRequest,
    ) -> Result<Vec<OsEvent>, OsError> {
        let mut ev = Vec::new();
        match req {
            OsRequest::LaunchApp { app_id } => {
                let app = Arc::clone(self.catalog.app(&app_id)?);
                s.shade_open = false;
                s.recents_open = false;
                s.blur();
                if s.foreground_app() == Some(app_id.as_str()) {
                    let id = s.foreground.expect("foreground app implies task");
                    s.touch_recent(id);
                    ev.push(OsEvent::TaskForegrounded { task_id: id });
                    return Ok(ev);
                }
                self.background_current(s, &mut ev);
                let id = match s.task_for_app(&app_id) {
                    Some(t) => t.task_id,
                    None => {
                        let id = s.next_task_id;
                        s.next_task_id += 1;
                        s.tasks.push(TaskStack {
                            task_id: id,
                            app_id: app_id.clone(),
                            activities: vec![self.initial_cursor(&app)],
                            backgrounded: false,
                        });
                        ev.push(OsEvent::TaskCreated { task_id: id, app_id });
                        id
                    }
                };
                s.task_mut(id).expect("present").backgrounded = false;
                s.foreground = Some(id);
                s.touch_recent(id);
                ev.push(OsEvent::TaskForegrounded { task_id: id });
            }
            OsRequest::GoHome => {
                s.shade_open = false;
                s.recents_open = false;
                if s.chooser.take().is_some() {
                    ev.push(OsEvent::ChooserCancelled);
                }
                s.blur();
                self.background_current(s, &mut ev);
                ev.push(OsEvent::Home);
            }
            OsRequest::ShowRecents => {
                s.shade_open = false;
                s.recents_open = true;
                s.blur();
                ev.push(OsEvent::RecentsShown);
            }
            OsRequest::CloseTask { task_id } => {
                if s.task(task_id).is_none() {
                    return Err(OsError::UnknownTask(task_id));
                }
                s.tasks.retain(|t| t.task_id != task_id);
                s.recents.retain(|&t| t != task_id);
                if s.foreground == Some(task_id) {
                    s.foreground = None;
                    s.blur();
                }
                ev.push(OsEvent::TaskClosed { task_id });
                let (orphaned, rest): (Vec<PendingResult>, Vec<PendingResult>) =
                    std::mem::take(&mut s.pending_results).into_iter().partition(|p| p.callee_task == task_id);
                s.pending_results = rest.into_iter().filter(|p| p.request.caller_task != task_id).collect();
                for p in orphaned {
                    if s.task(p.request.caller_task).is_some() {
                        write_creating(reg, &p.request.caller_app, &p.request.slot, Value::Null)?;
                    }
                    ev.push(OsEvent::CalleeClosedWithoutResult { token: p.token, caller_task: p.request.caller_task });
                }
            }
            OsRequest::PushActivity { state } => {
                let app_id = s.foreground_app().ok_or(OsError::NoForegroundTask)?.to_string();
                let app = self.catalog.app(&app_id)?;
                let known = match &app.nav {
                    Some(nav) => nav.state(&state.state).is_some(),
                    None => state.state == SINGLE_SCREEN_STATE,
                };
                if !known {
                    return Err(OsError::UnknownState { app: app_id, state: state.state });
                }
                let t = s.foreground_task_mut().expect("checked");
                t.activities.push(NavCursor::at(state.clone()));
                let task_id = t.task_id;
                s.blur();
                ev.push(OsEvent::ActivityPushed { task_id, state });
            }
            OsRequest::PopActivity => {
                let t = s.foreground_task_mut().ok_or(OsError::NoForegroundTask)?;
                if t.activities.len() == 1 {
                    return Err(OsError::PopOnRootActivity);
                }
                t.activities.pop();
                let task_id = t.task_id;
                s.blur();
                ev.push(OsEvent::ActivityPopped { task_id });
            }
        }
        Ok(ev)
    }

    fn background_current(&self, s: &mut Session, ev: &mut Vec<OsEvent>) {
        if let Some(id) = s.foreground.take() {
            if let Some(t) = s.task_mut(id) {
                t.backgrounded = true;
                ev.push(OsEvent::TaskBackgrounded { task_id: id });
            }
        }
    }

    /// Device reboot: clears every non-persisted store (tasks, system UI,
    /// volatile data). Persisted app and settings data are kept.
    pub fn reboot(&mut self, reg: &mut StateRegistry) {
        reg.reset_unpersisted();
        self.back.begin_frame();
    }

    // ---- back ----

    pub fn begin_frame(&mut self) {
        self.back.begin_frame();
    }

    /// Handler that would consume a back event now (pure).
    pub fn back_handler(&self, reg: &StateRegistry) -> Result<String, OsError> {
        Ok(self.back.select(&self.session(reg)?))
    }

    /// Registers an app back handler. Its consume predicate sees the
    /// session; firing it performs navigation-level back for the app.
    pub fn register_back_handler(&mut self, id: &str, priority: i32, consume: Consume<Session>) -> Result<(), OsError> {
        self.back.register_app(id, priority, consume)
    }

    /// One back event. `Ok(None)` when dropped by the frame lock.
    pub fn back(&mut self, reg: &mut StateRegistry) -> Result<Option<(String, Vec<OsEvent>)>, OsError> {
        let s = self.session(reg)?;
        let Some(handler) = self.back.dispatch(&s) else {
            return Ok(None);
        };
        let events = self.with_session(reg, |os, reg, s| os.apply_back(reg, s, &handler))?;
        Ok(Some((handler, events)))
    }

    fn apply_back(&mut self, reg: &mut StateRegistry, s: &mut Session, handler: &str) -> Result<Vec<OsEvent>, OsError> {
        let mut ev = Vec::new();
        match handler {
            "permission_dialog" => {
                s.permission = None;
                ev.push(OsEvent::PermissionDismissed);
            }
            "system_shade" => {
                s.shade_open = false;
                ev.push(OsEvent::ShadeClosed);
            }
            "chooser" => {
                s.chooser = None;
                ev.push(OsEvent::ChooserCancelled);
            }
            "recents" => {
                s.recents_open = false;
                ev.push(OsEvent::RecentsClosed);
            }
            "keyboard" => {
                s.keyboard = false;
                ev.push(OsEvent::KeyboardHidden);
            }
            HOME => ev.extend(self.reduce(reg, s, OsRequest::GoHome)?),
            _ => {
                let t = s.foreground_task_mut().ok_or(OsError::NoForegroundTask)?;
                let app_id = t.app_id.clone();
                match t.top_mut().back() {
                    Ok(to) => {
                        s.blur();
                        ev.push(OsEvent::NavigatedBack { app_id, to });
                    }
                    Err(_) => ev.extend(self.reduce(reg, s, OsRequest::PopActivity)?),
                }
            }
        }
        Ok(ev)
    }

    // ---- intents ----

    pub fn resolve_intent(&self, intent_type: &str) -> Result<Resolution, OsError> {
        self.catalog.intents.resolve(intent_type)
    }

    /// Sends an intent. With several handlers the chooser is shown and
    /// delivery waits for [`Os::choose`].
    pub fn send_intent(
        &mut self,
        reg: &mut StateRegistry,
        intent_type: &str,
        payload: StateValue,
    ) -> Result<Vec<OsEvent>, OsError> {
        self.with_session(reg, |os, reg, s| os.send_intent_in(reg, s, intent_type, payload, None))
    }

    /// `startActivityForResult`: the callee's first posted result is
    /// written to `slot` in the caller task's app store.
    pub fn start_for_result(
        &mut self,
        reg: &mut StateRegistry,
        intent_type: &str,
        payload: StateValue,
        reply_to: u64,
        slot: &str,
    ) -> Result<Vec<OsEvent>, OsError> {
        self.with_session(reg, |os, reg, s| {
            let caller = s.task(reply_to).ok_or(OsError::UnknownTask(reply_to))?;
            let request = ResultRequest { caller_task: reply_to, caller_app: caller.app_id.clone(), slot: slot.to_string() };
            os.send_intent_in(reg, s, intent_type, payload, Some(request))
        })
    }

    fn send_intent_in(
        &mut self,
        reg: &mut StateRegistry,
        s: &mut Session,
        intent_type: &str,
        payload: StateValue,
        reply: Option<ResultRequest>,
    ) -> Result<Vec<OsEvent>, OsError> {
        let mut candidates: Vec<IntentDecl> = match self.resolve_intent(intent_type)? {
            Resolution::Direct(d) => vec![d],
            Resolution::Chooser(ds) => ds,
        };
        if reply.is_some() {
            candidates.retain(|d| d.supports_result);
            if candidates.is_empty() {
                return Err(OsError::NoHandler(intent_type.to_string()));
            }
        }
        if candidates.len() == 1 {
            let d = candidates.pop().expect("one");
            return self.deliver(reg, s, &d, payload, reply);
        }
        let names: Vec<String> = candidates.into_iter().map(|d| d.app_id).collect();
        s.blur();
        s.chooser = Some(ChooserState {
            intent_type: intent_type.to_string(),
            payload,
            candidates: names.clone(),
            reply,
        });
        Ok(vec![OsEvent::ChooserShown { intent_type: intent_type.to_string(), candidates: names }])
    }

    /// Picks a chooser entry.
    pub fn choose(&mut self, reg: &mut StateRegistry, app_id: &str) -> Result<Vec<OsEvent>, OsError> {
        self.with_session(reg, |os, reg, s| {
            let ch = s.chooser.take().ok_or(OsError::NoChooser)?;
            if !ch.candidates.iter().any(|c| c == app_id) {
                return Err(OsError::NotACandidate(app_id.to_string()));
            }
            let d = os
                .catalog
                .intents
                .handler(&ch.intent_type, app_id)
                .cloned()
                .ok_or_else(|| OsError::NoHandler(ch.intent_type.clone()))?;
            os.deliver(reg, s, &d, ch.payload, ch.reply)
        })
    }

    fn deliver(
        &mut self,
        reg: &mut StateRegistry,
        s: &mut Session,
        d: &IntentDecl,
        payload: StateValue,
        reply: Option<ResultRequest>,
    ) -> Result<Vec<OsEvent>, OsError> {
        let app = Arc::clone(self.catalog.app(&d.app_id)?);
        let mut target = UiStateId::new(d.target_state.clone());
        if let Some(decl) = app.nav.as_ref().and_then(|n| n.state(&d.target_state)) {
            for p in decl.path_params() {
                let v = payload.get(p).ok_or_else(|| {
                    OsError::Nav(NavError::UnboundParam { state: d.target_state.clone(), param: p.to_string() })
                })?;
                target.params.insert(p.to_string(), display_text(v));
            }
        }
        let mut ev = self.reduce(reg, s, OsRequest::LaunchApp { app_id: d.app_id.clone() })?;
        if s.foreground_task().expect("just launched").top().current != target {
            ev.extend(self.reduce(reg, s, OsRequest::PushActivity { state: target })?);
        }
        if let Some(slot) = &d.payload_slot {
            write_creating(reg, &d.app_id, slot, payload)?;
        }
        if let Some(request) = reply {
            let token = s.next_token;
            s.next_token += 1;
            let callee_task = s.foreground.expect("launched");
            s.pending_results.push(PendingResult { token, callee_task, request });
            ev.push(OsEvent::ResultPending { token, callee_task });
        }
        Ok(ev)
    }

    fn post_result(
        &mut self,
        reg: &mut StateRegistry,
        s: &mut Session,
        callee_task: u64,
        value: StateValue,
    ) -> Result<Vec<OsEvent>, OsError> {
        let Some(pos) = s.pending_results.iter().position(|p| p.callee_task == callee_task) else {
            return Ok(Vec::new());
        };
        let p = s.pending_results.remove(pos);
        write_creating(reg, &p.request.caller_app, &p.request.slot, value)?;
        let mut ev = vec![OsEvent::ResultDelivered { token: p.token, caller_task: p.request.caller_task }];
        let root = s.task(callee_task).is_some_and(|t| t.activities.len() == 1);
        if root {
            s.tasks.retain(|t| t.task_id != callee_task);
            s.recents.retain(|&t| t != callee_task);
            ev.push(OsEvent::TaskClosed { task_id: callee_task });
        } else if let Some(t) = s.task_mut(callee_task) {
            t.activities.pop();
            ev.push(OsEvent::ActivityPopped { task_id: callee_task });
        }
        if s.foreground == Some(callee_task) {
            s.foreground = None;
        }
        if let Some(caller) = s.task_mut(p.request.caller_task) {
            caller.backgrounded = false;
            let id = caller.task_id;
            if let Some(prev) = s.foreground.filter(|&f| f != id) {
                if let Some(t) = s.task_mut(prev) {
                    t.backgrounded = true;
                }
            }
            s.foreground = Some(id);
            s.touch_recent(id);
            ev.push(OsEvent::TaskForegrounded { task_id: id });
        }
        s.blur();
        Ok(ev)
    }

    // ---- providers ----

    /// Runs a provider op; mutations notify `content/<provider>`.
    pub fn provider_execute(
        &mut self,
        reg: &mut StateRegistry,
        provider: &str,
        op: CrudOp,
        id: Option<&str>,
        record: Option<StateValue>,
    ) -> Result<ProviderResult, OsError> {
        let r = provider::execute(reg, provider, op, id, record)?;
        if r.notification(op).is_some() {
            self.with_session(reg, |os, _, s| {
                os.notify(s, provider, op, &r);
                Ok(())
            })?;
        }
        Ok(r)
    }

    fn notify(&mut self, s: &mut Session, provider: &str, op: CrudOp, r: &ProviderResult) -> Option<OsEvent> {
        let payload = r.notification(op)?;
        let id = payload["id"].as_str().unwrap_or_default().to_string();
        let topic = format!("content/{provider}");
        s.notifications.push(Notification { topic: topic.clone(), text: format!("{provider} {} {id}", op_name(op)) });
        self.bus.broadcast(&topic, payload);
        Some(OsEvent::ProviderChanged { provider: provider.to_string(), op, id })
    }

    pub fn broadcast(&mut self, topic: &str, payload: StateValue) -> usize {
        self.bus.broadcast(topic, payload)
    }

    // ---- navigation ----

    /// Fires `transition` in the foreground app.
    pub fn fire(
        &mut self,
        reg: &mut StateRegistry,
        app_id: &str,
        transition: &str,
        params: &BTreeMap<String, StateValue>,
    ) -> Result<(FireOutcome, Vec<OsEvent>), OsError> {
        self.with_session(reg, |os, reg, s| os.fire_in(reg, s, app_id, transition, params, false))
    }

    fn fire_in(
        &mut self,
        reg: &mut StateRegistry,
        s: &mut Session,
        app_id: &str,
        transition: &str,
        params: &BTreeMap<String, StateValue>,
        permission_checked: bool,
    ) -> Result<(FireOutcome, Vec<OsEvent>), OsError> {
        if s.foreground_app() != Some(app_id) {
            return Err(OsError::NotForeground(app_id.to_string()));
        }
        let app = Arc::clone(self.catalog.app(app_id)?);
        let nav = app.nav.clone().ok_or_else(|| NavError::UnknownTransition(transition.to_string()))?;
        let t = nav.transition(transition).ok_or_else(|| NavError::UnknownTransition(transition.to_string()))?;
        if let Some(perm) = &t.permission {
            if !permission_checked && !self.granted(reg, app_id, perm) {
                s.blur();
                s.permission = Some(PermissionRequest {
                    app_id: app_id.to_string(),
                    permission: perm.clone(),
                    transition: transition.to_string(),
                    params: params.clone(),
                });
                let ev = OsEvent::PermissionRequested { app_id: app_id.to_string(), permission: perm.clone() };
                return Ok((FireOutcome::PermissionRequested, vec![ev]));
            }
        }
        if let Some(i) = &t.intent {
            self.resolve_intent(&i.intent_type)?;
        }
        let task_id = s.foreground.expect("checked");
        let mut cursor = s.task(task_id).expect("fg").top().clone();
        let mut host = RegistryHost { reg, app: &app, changes: Vec::new() };
        let firing = cursor.fire(&nav, transition, params, &mut host)?;
        let changes = std::mem::take(&mut host.changes);
        *s.task_mut(task_id).expect("fg").top_mut() = cursor;
        let mut ev = Vec::new();
        if firing.from != firing.to {
            s.blur();
        }
        ev.push(OsEvent::Navigated {
            app_id: app_id.to_string(),
            transition: transition.to_string(),
            from: firing.from.clone(),
            to: firing.to.clone(),
        });
        for (provider, op, r) in &changes {
            ev.extend(self.notify(s, provider, *op, r));
        }
        if let Some((ty, payload, slot)) = &firing.intent {
            let reply = slot.as_ref().map(|slot| ResultRequest {
                caller_task: task_id,
                caller_app: app_id.to_string(),
                slot: slot.clone(),
            });
            ev.extend(self.send_intent_in(reg, s, ty, payload.clone(), reply)?);
        }
        if let Some(value) = &firing.result {
            ev.extend(self.post_result(reg, s, task_id, value.clone())?);
        }
        Ok((FireOutcome::Fired(firing), ev))
    }

    /// Answers the permission dialog. Allowing grants the permission and
    /// fires the transition that asked for it.
    pub fn decide_permission(&mut self, reg: &mut StateRegistry, allow: bool) -> Result<Vec<OsEvent>, OsError> {
        self.with_session(reg, |os, reg, s| {
            let Some(req) = s.permission.take() else {
                return Ok(Vec::new());
            };
            if !allow {
                return Ok(vec![OsEvent::PermissionDismissed]);
            }
            os.grant(reg, &req.app_id, &req.permission)?;
            let mut ev =
                vec![OsEvent::PermissionGranted { app_id: req.app_id.clone(), permission: req.permission.clone() }];
            if s.foreground_app() == Some(req.app_id.as_str()) {
                ev.extend(os.fire_in(reg, s, &req.app_id, &req.transition, &req.params, true)?.1);
            }
            Ok(ev)
        })
    }
}

fn op_name(op: CrudOp) -> &'static str {
    match op {
        CrudOp::Create => "created",
        CrudOp::Read => "read",
        CrudOp::Update => "updated",
        CrudOp::Delete => "deleted",
        CrudOp::List => "listed",
    }
}
