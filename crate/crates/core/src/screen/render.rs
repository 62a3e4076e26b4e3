use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::decl::{DeclKind, StateScreen, WidgetDecl};
use super::model::{
    sort_widgets, ScreenModel, ScrollInfo, StatusBar, Widget, WidgetKind, DEFAULT_DIMS, SCREEN_SCHEMA_VERSION,
};
use crate::nav::{GuardContext, GuardExpr, NavSpec};
use crate::os::{
    world_store, AppDef, HardwareState, Os, Session, ANSWER_SHEET_APP, ANSWER_SHEET_STORE, VOLATILE_STORE,
};
use crate::state::{cmp_segments, display_text, lookup, StateRegistry, StateValue};

pub const LAUNCHER: &str = "launcher";

pub const Z_KEYBOARD: i32 = 600;
pub const Z_CHOOSER: i32 = 700;
pub const Z_RECENTS: i32 = 720;
pub const Z_SHADE: i32 = 800;
pub const Z_STATUS_BAR: i32 = 950;
pub const Z_PERMISSION: i32 = 1000;

pub const STATUS_BAR_BOTTOM: i32 = 40;
pub const KEYBOARD_BOUNDS: [i32; 4] = [0, 650, 1000, 1000];
const FULL: [i32; 4] = [0, 0, 1000, 1000];

fn params(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Everything a template or guard inside one app screen can see.
#[derive(Clone)]
struct Scope<'a> {
    reg: &'a StateRegistry,
    app_id: &'a str,
    app_state: StateValue,
    data: StateValue,
    state_params: BTreeMap<String, Value>,
    item: Option<(&'a Value, usize, Option<&'a str>)>,
}

impl Scope<'_> {
    fn lookup(&self, key: &str) -> Option<Value> {
        let (head, rest) = key.split_once('.').unwrap_or((key, ""));
        // `:name` segments take the value of a state parameter.
        let segs: Vec<String> = rest
            .split('/')
            .filter(|x| !x.is_empty())
            .map(|seg| match seg.strip_prefix(':') {
                Some(p) => self.state_params.get(p).map(display_text).unwrap_or_default(),
                None => seg.to_string(),
            })
            .collect();
        match head {
            "item" => lookup(self.item?.0, &segs).cloned(),
            "index" => Some(json!(self.item?.1)),
            "key" => self.item?.2.map(|k| json!(k)),
            "param" => self.state_params.get(rest).cloned(),
            "app" => lookup(&self.app_state, &segs).cloned(),
            "data" => lookup(&self.data, &segs).cloned(),
            "app_id" => Some(json!(self.app_id)),
            "store" => self.reg.get(&segs.join("/")).ok(),
            _ => None,
        }
    }

    /// Expands `{...}` placeholders, innermost first, so a placeholder may
    /// build the key of an enclosing one. Unresolved placeholders become
    /// empty.
    fn text(&self, template: &str) -> String {
        let mut out = template.to_string();
        let mut from = 0;
        while let Some(close) = out[from..].find('}').map(|c| c + from) {
            let Some(open) = out[..close].rfind('{') else {
                from = close + 1;
                continue;
            };
            let v = self.lookup(&out[open + 1..close]).map(|v| display_text(&v)).unwrap_or_default();
            out.replace_range(open..=close, &v);
            from = open + v.len();
        }
        out
    }

    /// A value that is exactly one placeholder keeps its JSON type.
    fn value(&self, v: &Value) -> Value {
        match v {
            Value::String(s) => {
                if s.starts_with('{') && s.ends_with('}') && s[1..].find('{').is_none() {
                    self.lookup(&s[1..s.len() - 1]).unwrap_or(Value::Null)
                } else {
                    Value::String(self.text(s))
                }
            }
            Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), self.value(v))).collect()),
            Value::Array(a) => Value::Array(a.iter().map(|v| self.value(v)).collect()),
            other => other.clone(),
        }
    }

    fn guard(&self, g: &GuardExpr, extra: &BTreeMap<String, Value>) -> bool {
        let mut params = self.state_params.clone();
        params.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        g.eval(&GuardContext { app_state: &self.app_state, params: &params, data: &self.data }).unwrap_or(false)
    }
}

/// Renders the current screen. Pure over the registry contents.
pub fn render(reg: &StateRegistry, os: &Os) -> ScreenModel {
    let session = os.session(reg).unwrap_or_default();
    let hardware = os.hardware(reg).unwrap_or_else(|_| HardwareState::default());
    let mut widgets = Vec::new();

    let (foreground_app, route) = match session.foreground_task() {
        None => {
            launcher(os, &mut widgets);
            (LAUNCHER.to_string(), "/".to_string())
        }
        Some(task) => {
            let cursor = task.top();
            match os.catalog().apps.get(&task.app_id) {
                Some(app) if app.id() == ANSWER_SHEET_APP => {
                    answer_sheet(reg, &session, &mut widgets);
                }
                Some(app) => app_screen(reg, &session, app, &cursor.current, &mut widgets),
                None => {}
            }
            let route = match os.catalog().apps.get(&task.app_id).and_then(|a| a.nav.as_ref()) {
                Some(nav) => nav.route(&cursor.current),
                None => "/".to_string(),
            };
            (task.app_id.clone(), route)
        }
    };

    overlays(os, &session, &hardware, &mut widgets);
    let clock_ms = reg.get(&format!("{VOLATILE_STORE}/clock_ms")).ok().and_then(|v| v.as_u64()).unwrap_or(0);
    let clock = format!("{:02}:{:02}", (clock_ms / 3_600_000) % 24, (clock_ms / 60_000) % 60);
    widgets.push(
        Widget::new("status_bar", WidgetKind::Label, [0, 0, 1000, STATUS_BAR_BOTTOM], Z_STATUS_BAR)
            .text(clock.clone())
            .trigger("os.shade.open", BTreeMap::new()),
    );
    sort_widgets(&mut widgets);
    ScreenModel {
        version: SCREEN_SCHEMA_VERSION,
        foreground_app,
        route,
        screen_dims_px: DEFAULT_DIMS,
        status_bar: StatusBar { clock, hardware, notifications: session.notifications.len() },
        widgets,
    }
}

fn launcher(os: &Os, out: &mut Vec<Widget>) {
    let icons = os.catalog().apps.values().filter(|a| a.manifest.launcher);
    for (i, app) in icons.enumerate() {
        let (c, r) = ((i % 4) as i32, (i / 4) as i32);
        let bounds = [c * 250 + 25, 120 + r * 200, c * 250 + 225, 280 + r * 200];
        out.push(
            Widget::new(format!("launcher.{}", app.id()), WidgetKind::Button, bounds, 0)
                .text(app.manifest.label.clone())
                .trigger("os.launch", params(&[("app", json!(app.id()))])),
        );
    }
}

fn app_screen(
    reg: &StateRegistry,
    session: &Session,
    app: &AppDef,
    ui: &crate::nav::UiStateId,
    out: &mut Vec<Widget>,
) {
    let app_state = reg.get(app.id()).unwrap_or(Value::Null);
    let data = if app.has_world() { reg.get(&world_store(app.id())).unwrap_or(Value::Null) } else { app_state.clone() };
    let scope = Scope {
        reg,
        app_id: app.id(),
        app_state,
        data,
        state_params: ui.params.iter().map(|(k, v)| (k.clone(), json!(v))).collect(),
        item: None,
    };
    let layers = app.screens.layers(&ui.state);
    let title = layers.iter().rev().find_map(|l| l.title.as_deref()).unwrap_or(&app.manifest.label);
    out.push(Widget::new("title", WidgetKind::Label, [0, STATUS_BAR_BOTTOM, 1000, 110], 0).text(scope.text(title)));
    let nav = app.nav.as_deref();
    let mut modal_depth = 0;
    for layer in layers {
        let z_base = match &layer.modal {
            Some(m) => {
                modal_depth += 1;
                let z = 100 * (modal_depth + 1);
                let mut scrim = Widget::new(format!("scrim.{modal_depth}"), WidgetKind::ModalScrim, FULL, z);
                if let Some(d) = &m.dismiss {
                    scrim = scrim.trigger(d.clone(), BTreeMap::new());
                }
                out.push(scrim);
                out.push(Widget::new(format!("modal.{modal_depth}"), WidgetKind::Container, m.bounds, z + 1));
                z + 1
            }
            None => 0,
        };
        layer_widgets(&scope, session, nav, layer, z_base, out);
    }
}

fn visible(scope: &Scope<'_>, nav: Option<&NavSpec>, trigger: Option<&str>, p: &BTreeMap<String, Value>) -> bool {
    match (nav, trigger) {
        (Some(nav), Some(t)) => match nav.ui_conditions.get(t) {
            Some(g) => scope.guard(g, p),
            None => true,
        },
        _ => true,
    }
}

fn layer_widgets(
    scope: &Scope<'_>,
    session: &Session,
    nav: Option<&NavSpec>,
    layer: &StateScreen,
    z_base: i32,
    out: &mut Vec<Widget>,
) {
    for d in &layer.widgets {
        if d.visible_when.as_ref().is_some_and(|g| !scope.guard(g, &BTreeMap::new())) {
            continue;
        }
        let p: BTreeMap<String, Value> = d.params.iter().map(|(k, v)| (k.clone(), scope.value(v))).collect();
        if !visible(scope, nav, d.trigger.as_deref(), &p) {
            continue;
        }
        let z = z_base + d.z;
        if d.kind == DeclKind::List {
            list(scope, session, nav, d, z, out);
            continue;
        }
        let kind = match d.kind {
            DeclKind::Label => WidgetKind::Label,
            DeclKind::Button => WidgetKind::Button,
            DeclKind::TextField => WidgetKind::TextField,
            DeclKind::Toggle => WidgetKind::Toggle,
            DeclKind::ImageRef => WidgetKind::ImageRef,
            DeclKind::Container | DeclKind::List => WidgetKind::Container,
        };
        let mut w = Widget::new(d.id.clone(), kind, d.bounds, z);
        w.enabled = d.enabled_when.as_ref().is_none_or(|g| scope.guard(g, &p));
        if let Some(t) = &d.text {
            w.text = Some(scope.text(t));
        }
        if let Some(t) = &d.trigger {
            w.trigger_id = Some(t.clone());
            w.trigger_params = p;
        }
        if let Some(bind) = &d.bind {
            let path = scope.text(bind);
            let current = scope.reg.get(&path).ok();
            match kind {
                WidgetKind::TextField => {
                    w.text = Some(current.as_ref().map(display_text).unwrap_or_default());
                    w.placeholder = d.placeholder.as_ref().map(|p| scope.text(p));
                    w.focused = session.focus.as_deref() == Some(d.id.as_str());
                    w.commit = d.commit.clone();
                }
                _ => w.checked = Some(current.as_ref().and_then(Value::as_bool).unwrap_or(false)),
            }
            w.bind = Some(path);
        }
        out.push(w);
    }
}

fn list(scope: &Scope<'_>, session: &Session, nav: Option<&NavSpec>, d: &WidgetDecl, z: i32, out: &mut Vec<Widget>) {
    let item_decl = d.item.as_ref().expect("validated at parse");
    let source = scope.reg.get(&scope.text(d.source.as_deref().expect("validated at parse"))).unwrap_or(Value::Null);
    let entries: Vec<(Option<String>, Value)> = match source {
        Value::Array(a) => a.into_iter().map(|v| (None, v)).collect(),
        Value::Object(m) => {
            let mut e: Vec<(Option<String>, Value)> = m.into_iter().map(|(k, v)| (Some(k), v)).collect();
            e.sort_by(|a, b| {
                cmp_segments(std::slice::from_ref(a.0.as_ref().unwrap()), std::slice::from_ref(b.0.as_ref().unwrap()))
            });
            e
        }
        _ => Vec::new(),
    };
    let [x0, y0, x1, y1] = d.bounds;
    let h = d.item_height;
    let key = format!("{}:{}", scope.app_id, d.id);
    let mut shown = Vec::new();
    for (i, (k, v)) in entries.iter().enumerate() {
        let sub = Scope { item: Some((v, i, k.as_deref())), ..scope.clone() };
        let p: BTreeMap<String, Value> = item_decl.params.iter().map(|(k, v)| (k.clone(), sub.value(v))).collect();
        if !visible(&sub, nav, item_decl.trigger.as_deref(), &p) {
            continue;
        }
        let enabled = item_decl.enabled_when.as_ref().is_none_or(|g| sub.guard(g, &p));
        shown.push((sub.text(&item_decl.text), p, enabled));
    }
    let content = shown.len() as i64 * h as i64;
    let max = (content - (y1 - y0) as i64).max(0);
    let offset = session.scroll.get(&key).copied().unwrap_or(0).clamp(0, max);
    let mut container = Widget::new(d.id.clone(), WidgetKind::Container, d.bounds, z);
    container.scroll = Some(ScrollInfo { key, max });
    out.push(container);
    for (i, (text, p, enabled)) in shown.into_iter().enumerate() {
        let top = y0 as i64 + i as i64 * h as i64 - offset;
        let bottom = top + h as i64;
        if top < y0 as i64 || bottom > y1 as i64 {
            continue;
        }
        let mut w = Widget::new(format!("{}.{i}", d.id), WidgetKind::ListItem, [x0, top as i32, x1, bottom as i32], z)
            .text(text);
        w.enabled = enabled;
        if let Some(t) = &item_decl.trigger {
            w = w.trigger(t.clone(), p);
        }
        out.push(w);
    }
}

/// Field rows of the answer sheet, drawn from `answer_sheet/fields`.
fn answer_sheet(reg: &StateRegistry, session: &Session, out: &mut Vec<Widget>) {
    let sheet = reg.store_value(ANSWER_SHEET_STORE).cloned().unwrap_or(Value::Null);
    out.push(Widget::new("title", WidgetKind::Label, [0, STATUS_BAR_BOTTOM, 1000, 110], 0).text("AnswerSheet"));
    let fields = sheet["fields"].as_array().cloned().unwrap_or_default();
    let mut y = 120;
    for f in &fields {
        let id = f["field_id"].as_str().unwrap_or_default();
        let draft = &sheet["drafts"][id];
        out.push(
            Widget::new(format!("label.{id}"), WidgetKind::Label, [40, y, 960, y + 40], 0)
                .text(f["hint"].as_str().unwrap_or(id).to_string()),
        );
        y += 45;
        if f["field_type"] == "choice" {
            for opt in f["choices"].as_array().into_iter().flatten() {
                let opt = opt.as_str().unwrap_or_default();
                let mark = if draft.as_str() == Some(opt) { "(x)" } else { "( )" };
                out.push(
                    Widget::new(format!("field.{id}.{opt}"), WidgetKind::ListItem, [40, y, 960, y + 60], 0)
                        .text(format!("{mark} {opt}"))
                        .trigger("answersheet.choose", params(&[("field", json!(id)), ("option", json!(opt))])),
                );
                y += 65;
            }
        } else {
            let wid = format!("field.{id}");
            let mut w = Widget::new(wid.clone(), WidgetKind::TextField, [40, y, 960, y + 70], 0);
            w.text = Some(if draft.is_null() { String::new() } else { display_text(draft) });
            w.placeholder = f["hint"].as_str().map(str::to_string);
            w.focused = session.focus.as_deref() == Some(wid.as_str());
            w.bind = Some(format!("{ANSWER_SHEET_STORE}/drafts/{id}"));
            out.push(w);
            y += 80;
        }
        y += 10;
    }
    let submitted = sheet["submitted"].as_bool().unwrap_or(false);
    out.push(
        Widget::new("submit", WidgetKind::Button, [300, 560, 700, 630], 0)
            .text(if submitted { "Submitted" } else { "Submit" })
            .trigger("answersheet.submit", BTreeMap::new()),
    );
}

fn overlays(os: &Os, s: &Session, hw: &HardwareState, out: &mut Vec<Widget>) {
    if s.keyboard {
        out.push(Widget::new("keyboard", WidgetKind::ImageRef, KEYBOARD_BOUNDS, Z_KEYBOARD).text("keyboard"));
    }
    if let Some(c) = &s.chooser {
        out.push(Widget::new("chooser.scrim", WidgetKind::ModalScrim, FULL, Z_CHOOSER).trigger("os.chooser.cancel", BTreeMap::new()));
        for (i, app) in c.candidates.iter().enumerate() {
            let y = 300 + i as i32 * 120;
            let label = os.catalog().apps.get(app).map(|a| a.manifest.label.clone()).unwrap_or_else(|| app.clone());
            out.push(
                Widget::new(format!("chooser.{app}"), WidgetKind::Button, [100, y, 900, y + 100], Z_CHOOSER + 1)
                    .text(label)
                    .trigger("os.chooser.pick", params(&[("app", json!(app))])),
            );
        }
    }
    if s.recents_open {
        out.push(Widget::new("recents.scrim", WidgetKind::ModalScrim, FULL, Z_RECENTS).trigger("os.recents.dismiss", BTreeMap::new()));
        for (i, id) in s.recents.iter().enumerate() {
            let Some(t) = s.task(*id) else { continue };
            let y = 100 + i as i32 * 150;
            if y + 130 > 1000 {
                break;
            }
            let label = os.catalog().apps.get(&t.app_id).map(|a| a.manifest.label.clone()).unwrap_or_default();
            out.push(
                Widget::new(format!("recents.{id}"), WidgetKind::Button, [100, y, 800, y + 130], Z_RECENTS + 1)
                    .text(label)
                    .trigger("os.recents.open", params(&[("task", json!(id))])),
            );
            out.push(
                Widget::new(format!("recents.{id}.close"), WidgetKind::Button, [820, y, 900, y + 130], Z_RECENTS + 1)
                    .text("x")
                    .trigger("os.task.close", params(&[("task", json!(id))])),
            );
        }
    }
    if s.shade_open {
        out.push(Widget::new("shade.scrim", WidgetKind::ModalScrim, FULL, Z_SHADE).trigger("os.shade.close", BTreeMap::new()));
        let toggles = [("wifi", hw.wifi), ("cellular", hw.cellular), ("bluetooth", hw.bluetooth), ("airplane_mode", hw.airplane_mode), ("dnd", hw.dnd)];
        for (i, (field, on)) in toggles.into_iter().enumerate() {
            let x = 20 + i as i32 * 195;
            let mut w = Widget::new(format!("shade.{field}"), WidgetKind::Toggle, [x, 60, x + 180, 200], Z_SHADE + 1).text(field);
            w.checked = Some(on);
            w.bind = Some(format!("{}/hardware/{field}", crate::os::SETTINGS_STORE));
            out.push(w);
        }
        for (i, n) in s.notifications.iter().rev().take(6).enumerate() {
            let y = 220 + i as i32 * 90;
            out.push(Widget::new(format!("shade.note.{i}"), WidgetKind::Label, [20, y, 980, y + 80], Z_SHADE + 1).text(n.text.clone()));
        }
    }
    if let Some(p) = &s.permission {
        out.push(Widget::new("permission.scrim", WidgetKind::ModalScrim, FULL, Z_PERMISSION));
        out.push(
            Widget::new("permission.prompt", WidgetKind::Label, [100, 350, 900, 450], Z_PERMISSION + 1)
                .text(format!("Allow {} to use {}?", p.app_id, p.permission)),
        );
        out.push(
            Widget::new("permission.deny", WidgetKind::Button, [100, 500, 480, 580], Z_PERMISSION + 1)
                .text("Deny")
                .trigger("os.permission.deny", BTreeMap::new()),
        );
        out.push(
            Widget::new("permission.allow", WidgetKind::Button, [520, 500, 900, 580], Z_PERMISSION + 1)
                .text("Allow")
                .trigger("os.permission.allow", BTreeMap::new()),
        );
    }
}
