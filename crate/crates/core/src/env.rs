//! One simulated device: a state registry plus the OS kernel, driven by
//! agent actions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::os::{
    write_creating, AppCatalog, Os, OsError, OsEvent, OsRequest, ANSWER_SHEET_STORE, SETTINGS_STORE,
    VOLATILE_STORE,
};
use crate::screen::{hit_test, render, Action, ActionKind, ScreenError, ScreenModel, Widget, WidgetKind, STATUS_BAR_BOTTOM};
use crate::state::{Snapshot, StateError, StateRegistry};

/// SWIPE moves content by `delta * SWIPE_NUM / SWIPE_DEN`; DRAG by `delta`.
pub const SWIPE_NUM: i64 = 5;
pub const SWIPE_DEN: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Declared {
    #[default]
    None,
    Complete,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub screen: ScreenModel,
    pub terminated: bool,
    pub declared: Declared,
    pub answer_events: Vec<Value>,
    /// OS events and rejections caused by this action.
    pub effects: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub reg: StateRegistry,
    pub os: Os,
    declared: Declared,
}

fn event(e: &OsEvent) -> Value {
    serde_json::to_value(e).expect("events serialize")
}

fn rejected(reason: impl ToString) -> Value {
    json!({"event": "REJECTED", "reason": reason.to_string()})
}

impl Environment {
    pub fn new(catalog: Arc<AppCatalog>) -> Result<Self, OsError> {
        let reg = catalog.build_registry()?;
        Ok(Self::from_registry(catalog, reg))
    }

    pub fn from_registry(catalog: Arc<AppCatalog>, reg: StateRegistry) -> Self {
        Self { reg, os: Os::new(catalog), declared: Declared::None }
    }

    pub fn declared(&self) -> Declared {
        self.declared
    }

    pub fn terminated(&self) -> bool {
        self.declared != Declared::None
    }

    pub fn render(&self) -> ScreenModel {
        render(&self.reg, &self.os)
    }

    pub fn snapshot(&mut self) -> Snapshot {
        self.reg.snapshot()
    }

    /// Restores every captured store and clears the termination latch.
    pub fn restore(&mut self, snap: &Snapshot) -> Result<(), StateError> {
        self.reg.restore(snap)?;
        self.os.bus.clear_log();
        self.os.begin_frame();
        self.declared = Declared::None;
        Ok(())
    }

    pub fn answer_events(&self) -> Vec<Value> {
        self.reg.get(&format!("{ANSWER_SHEET_STORE}/answer_events")).ok().and_then(|v| v.as_array().cloned()).unwrap_or_default()
    }

    /// Executes one action. Each call is its own input frame.
    pub fn execute(&mut self, action: &Action) -> Result<StepOutcome, ScreenError> {
        if self.terminated() {
            return Err(ScreenError::ActionAfterTermination);
        }
        action.validate()?;
        self.os.begin_frame();
        let mut effects = Vec::new();
        match action.kind {
            ActionKind::Click => {
                let screen = self.render();
                if let Some(w) = hit_test(&screen, action.point.expect("validated")) {
                    self.activate(&w.clone(), &mut effects);
                }
            }
            ActionKind::DoubleTap => {
                let screen = self.render();
                if let Some(w) = hit_test(&screen, action.point.expect("validated")).cloned() {
                    match self.variant_trigger(&w, "doubletap") {
                        Some(t) if w.enabled => self.route(&t, &w.trigger_params, &mut effects),
                        _ => self.activate(&w, &mut effects),
                    }
                }
            }
            ActionKind::LongPress => {
                let screen = self.render();
                if let Some(w) = hit_test(&screen, action.point.expect("validated")).cloned() {
                    if let Some(t) = self.variant_trigger(&w, "longpress").filter(|_| w.enabled) {
                        self.route(&t, &w.trigger_params, &mut effects);
                    }
                }
            }
            ActionKind::Type => self.type_text(action, &mut effects),
            ActionKind::Swipe => self.stroke(action, SWIPE_NUM, SWIPE_DEN, &mut effects),
            ActionKind::Drag => self.stroke(action, 1, 1, &mut effects),
            ActionKind::Back => match self.os.back(&mut self.reg) {
                Ok(Some((handler, ev))) => {
                    effects.push(json!({"event": "BACK", "handler": handler}));
                    effects.extend(ev.iter().map(event));
                }
                Ok(None) => {}
                Err(e) => effects.push(rejected(e)),
            },
            ActionKind::Home => self.request(OsRequest::GoHome, &mut effects),
            ActionKind::Recent => self.request(OsRequest::ShowRecents, &mut effects),
            ActionKind::Enter => {
                let screen = self.render();
                match screen.focused().cloned() {
                    Some(Widget { commit: Some(t), trigger_params, .. }) => self.route(&t, &trigger_params, &mut effects),
                    _ => self.blur(&mut effects),
                }
            }
            ActionKind::Wait => {
                let ms = (action.wait_seconds().expect("validated") * 1000.0).round() as u64;
                let path = format!("{VOLATILE_STORE}/clock_ms");
                let now = self.reg.get(&path).ok().and_then(|v| v.as_u64()).unwrap_or(0);
                self.reg.set(&path, json!(now.saturating_add(ms))).map_err(|e| ScreenError::Internal(e.to_string()))?;
            }
            ActionKind::Awake => {
                let app = action.value.clone().expect("validated");
                self.request(OsRequest::LaunchApp { app_id: app }, &mut effects);
            }
            ActionKind::Answer => {
                let mut events = self.answer_events();
                events.push(json!(action.value.clone().expect("validated")));
                self.write(ANSWER_SHEET_STORE, "answer_events", Value::Array(events), &mut effects);
            }
            ActionKind::Complete => self.declared = Declared::Complete,
            ActionKind::Abort => self.declared = Declared::Abort,
            ActionKind::Info => {
                let text = action.value.clone().expect("validated");
                let r = self.os.with_session(&mut self.reg, |_, _, s| {
                    s.info_events.push(text);
                    Ok(())
                });
                if let Err(e) = r {
                    effects.push(rejected(e));
                }
            }
            ActionKind::Noop => {}
        }
        Ok(StepOutcome {
            screen: self.render(),
            terminated: self.terminated(),
            declared: self.declared,
            answer_events: self.answer_events(),
            effects,
        })
    }

    /// `<trigger>.<suffix>` when the foreground app declares it.
    fn variant_trigger(&self, w: &Widget, suffix: &str) -> Option<String> {
        let t = format!("{}.{suffix}", w.trigger_id.as_ref()?);
        let s = self.os.session(&self.reg).ok()?;
        let app = self.os.catalog().apps.get(s.foreground_app()?)?;
        app.nav.as_ref()?.transition(&t).map(|_| t)
    }

    fn request(&mut self, req: OsRequest, effects: &mut Vec<Value>) {
        match self.os.dispatch(&mut self.reg, req) {
            Ok(ev) => effects.extend(ev.iter().map(event)),
            Err(e) => effects.push(rejected(e)),
        }
    }

    fn write(&mut self, store: &str, rel: &str, value: Value, effects: &mut Vec<Value>) {
        if let Err(e) = write_creating(&mut self.reg, store, rel, value) {
            effects.push(rejected(e));
        }
    }

    fn blur(&mut self, effects: &mut Vec<Value>) {
        let r = self.os.with_session(&mut self.reg, |_, _, s| {
            s.blur();
            Ok(())
        });
        if let Err(e) = r {
            effects.push(rejected(e));
        }
    }

    fn activate(&mut self, w: &Widget, effects: &mut Vec<Value>) {
        if !w.enabled {
            effects.push(json!({"event": "DISABLED", "widget": w.widget_id}));
            return;
        }
        match w.kind {
            WidgetKind::TextField => {
                let id = w.widget_id.clone();
                let r = self.os.with_session(&mut self.reg, |_, _, s| {
                    s.focus = Some(id);
                    s.keyboard = true;
                    Ok(())
                });
                if let Err(e) = r {
                    effects.push(rejected(e));
                }
            }
            WidgetKind::Toggle => {
                let Some(bind) = &w.bind else { return };
                let on = !w.checked.unwrap_or(false);
                match bind.strip_prefix(&format!("{SETTINGS_STORE}/hardware/")) {
                    Some(field) => match self.os.set_hardware(&mut self.reg, field, &json!(on)) {
                        Ok(_) => effects.push(json!({"event": "HARDWARE", "field": field, "value": on})),
                        Err(e) => effects.push(rejected(e)),
                    },
                    None => {
                        let (store, rel) = bind.split_once('/').unwrap_or((bind, ""));
                        let (store, rel) = (store.to_string(), rel.to_string());
                        self.write(&store, &rel, json!(on), effects);
                    }
                }
                if let Some(t) = &w.trigger_id {
                    self.route(t, &w.trigger_params, effects);
                }
            }
            _ => {
                if let Some(t) = &w.trigger_id {
                    self.route(t, &w.trigger_params, effects);
                }
            }
        }
    }

    fn type_text(&mut self, action: &Action, effects: &mut Vec<Value>) {
        let screen = self.render();
        if let Some(p) = action.point {
            match hit_test(&screen, p) {
                Some(w) if w.kind == WidgetKind::TextField && w.enabled => self.activate(&w.clone(), effects),
                _ => {
                    effects.push(rejected("no text field at point"));
                    return;
                }
            }
        }
        let screen = if action.point.is_some() { self.render() } else { screen };
        let Some(field) = screen.focused() else {
            effects.push(rejected("no focused text field"));
            return;
        };
        let Some(bind) = field.bind.clone() else { return };
        let value = action.value.clone().expect("validated");
        let text = if action.clear.unwrap_or(false) { value } else { format!("{}{value}", field.text.clone().unwrap_or_default()) };
        let (store, rel) = bind.split_once('/').unwrap_or((&bind, ""));
        let (store, rel) = (store.to_string(), rel.to_string());
        self.write(&store, &rel, Value::String(text), effects);
    }

    fn stroke(&mut self, action: &Action, num: i64, den: i64, effects: &mut Vec<Value>) {
        let (from, to) = (action.point1.expect("validated"), action.point2.expect("validated"));
        let dy = (to.y - from.y) as i64;
        if from.y < STATUS_BAR_BOTTOM && dy > 0 {
            self.route("os.shade.open", &BTreeMap::new(), effects);
            return;
        }
        let screen = self.render();
        let target = screen.widgets.iter().rev().find(|w| w.scroll.is_some() && w.contains(from));
        let Some(info) = target.and_then(|w| w.scroll.clone()) else { return };
        // Dragging content upwards (negative dy) reveals later items.
        let delta = -dy * num / den;
        let r = self.os.with_session(&mut self.reg, |_, _, s| {
            let cur = s.scroll.get(&info.key).copied().unwrap_or(0);
            let next = (cur + delta).clamp(0, info.max);
            s.scroll.insert(info.key.clone(), next);
            Ok(next)
        });
        match r {
            Ok(off) => effects.push(json!({"event": "SCROLLED", "container": info.key, "offset": off})),
            Err(e) => effects.push(rejected(e)),
        }
    }

    /// Dispatches a widget trigger: OS triggers, the answer sheet, or a
    /// transition of the foreground app.
    fn route(&mut self, trigger: &str, params: &BTreeMap<String, Value>, effects: &mut Vec<Value>) {
        let str_param = |k: &str| params.get(k).and_then(Value::as_str).map(str::to_string).unwrap_or_default();
        let task_param = || params.get("task").and_then(Value::as_u64).unwrap_or(0);
        let r: Result<Vec<OsEvent>, OsError> = match trigger {
            "os.launch" => self.os.dispatch(&mut self.reg, OsRequest::LaunchApp { app_id: str_param("app") }),
            "os.task.close" => self.os.dispatch(&mut self.reg, OsRequest::CloseTask { task_id: task_param() }),
            "os.recents.open" => {
                let id = task_param();
                match self.os.session(&self.reg).map(|s| s.task(id).map(|t| t.app_id.clone())) {
                    Ok(Some(app_id)) => self.os.dispatch(&mut self.reg, OsRequest::LaunchApp { app_id }),
                    Ok(None) => Err(OsError::UnknownTask(id)),
                    Err(e) => Err(e),
                }
            }
            "os.recents.dismiss" | "os.shade.open" | "os.shade.close" | "os.chooser.cancel" => {
                let t = trigger.to_string();
                self.os.with_session(&mut self.reg, move |_, _, s| {
                    Ok(match t.as_str() {
                        "os.recents.dismiss" => {
                            s.recents_open = false;
                            vec![OsEvent::RecentsClosed]
                        }
                        "os.shade.open" => {
                            s.blur();
                            s.shade_open = true;
                            vec![OsEvent::ShadeOpened]
                        }
                        "os.shade.close" => {
                            s.shade_open = false;
                            vec![OsEvent::ShadeClosed]
                        }
                        _ => {
                            s.chooser = None;
                            vec![OsEvent::ChooserCancelled]
                        }
                    })
                })
            }
            "os.chooser.pick" => self.os.choose(&mut self.reg, &str_param("app")),
            "os.permission.allow" => self.os.decide_permission(&mut self.reg, true),
            "os.permission.deny" => self.os.decide_permission(&mut self.reg, false),
            "answersheet.choose" => {
                let (field, option) = (str_param("field"), str_param("option"));
                self.write(ANSWER_SHEET_STORE, &format!("drafts/{field}"), json!(option), effects);
                Ok(Vec::new())
            }
            "answersheet.submit" => {
                self.submit_answer_sheet(effects);
                Ok(Vec::new())
            }
            _ => match self.os.session(&self.reg) {
                Ok(s) => match s.foreground_app() {
                    Some(app) => {
                        let app = app.to_string();
                        self.os.fire(&mut self.reg, &app, trigger, params).map(|(_, ev)| ev)
                    }
                    None => Err(OsError::NoForegroundTask),
                },
                Err(e) => Err(e),
            },
        };
        match r {
            Ok(ev) => effects.extend(ev.iter().map(event)),
            Err(e) => effects.push(rejected(e)),
        }
    }

    /// Converts drafts to typed values and marks the sheet submitted.
    fn submit_answer_sheet(&mut self, effects: &mut Vec<Value>) {
        let sheet = self.reg.store_value(ANSWER_SHEET_STORE).cloned().unwrap_or(Value::Null);
        let mut values = serde_json::Map::new();
        for f in sheet["fields"].as_array().into_iter().flatten() {
            let id = f["field_id"].as_str().unwrap_or_default();
            let draft = sheet["drafts"].get(id).cloned().unwrap_or(Value::Null);
            values.insert(id.to_string(), typed_submission(f["field_type"].as_str().unwrap_or("text"), &draft));
        }
        self.write(ANSWER_SHEET_STORE, "values", Value::Object(values), effects);
        self.write(ANSWER_SHEET_STORE, "submitted", json!(true), effects);
        effects.push(json!({"event": "ANSWER_SHEET_SUBMITTED"}));
    }
}

/// Typed value stored for one answer field. Numbers that do not parse stay
/// text, which the number matcher then rejects.
pub fn typed_submission(field_type: &str, draft: &Value) -> Value {
    let Some(text) = draft.as_str() else { return draft.clone() };
    match field_type {
        "number" => {
            let t = text.trim();
            if let Ok(i) = t.parse::<i64>() {
                json!(i)
            } else {
                match t.parse::<f64>() {
                    Ok(f) if f.is_finite() => json!(f),
                    _ => Value::String(text.to_string()),
                }
            }
        }
        "repeatable" => Value::Array(
            text.split(';').map(str::trim).filter(|s| !s.is_empty()).map(|s| Value::String(s.to_string())).collect(),
        ),
        _ => Value::String(text.to_string()),
    }
}
