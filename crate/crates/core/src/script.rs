//! Screen-driven playback of a template's scripted solution.
//!
//! Steps are JSON objects, one key each:
//! `{"launch": app}`, `{"tap": widget_id}`, `{"tap_text": text, "list": id}`,
//! `{"type": widget_id, "text": s}`, `{"shade": hardware_field}`,
//! `{"answer": {field_id: value}}`, `{"back": true}`, `{"home": true}`.
//! The agent only looks at the rendered screen, like any other agent.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::metrics::ExpectedChangeMask;
use crate::task::TaskInstance;

use crate::os::ANSWER_SHEET_APP;
use crate::screen::{hit_test, Action, ActionKind, Point, ScreenModel, Widget, WidgetKind, STATUS_BAR_BOTTOM};
use crate::state::display_text;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("malformed step {0}")]
    Malformed(String),
    #[error("step {step}: {reason}")]
    Stuck { step: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Launch(String),
    Tap(String),
    TapText { text: String, list: String },
    Focus(String),
    Type(String),
    OpenShade,
    CloseShade,
    Key(ActionKind),
}

/// Expands a script into primitive operations, then turns each into an
/// action against the current screen.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    ops: VecDeque<Op>,
    last_scroll: Option<Vec<String>>,
    finished: bool,
}

fn center(w: &Widget) -> Point {
    let [x0, y0, x1, y1] = w.bounds;
    Point::new((x0 + x1) / 2, (y0 + y1) / 2)
}

fn text_of(v: &Value) -> String {
    match v {
        Value::Array(items) => items.iter().map(display_text).collect::<Vec<_>>().join("; "),
        other => display_text(other),
    }
}

impl ScriptedAgent {
    pub fn new(steps: &[Value]) -> Result<Self, ScriptError> {
        let mut ops = VecDeque::new();
        for step in steps {
            let bad = || ScriptError::Malformed(step.to_string());
            let obj = step.as_object().ok_or_else(bad)?;
            let s = |k: &str| obj.get(k).map(text_of).ok_or_else(bad);
            if let Some(app) = obj.get("launch") {
                ops.push_back(Op::Launch(text_of(app)));
            } else if obj.contains_key("tap_text") {
                ops.push_back(Op::TapText { text: s("tap_text")?, list: s("list")? });
            } else if let Some(id) = obj.get("tap") {
                ops.push_back(Op::Tap(text_of(id)));
            } else if let Some(id) = obj.get("type") {
                let id = text_of(id);
                ops.push_back(Op::Focus(id.clone()));
                ops.push_back(Op::Type(s("text")?));
            } else if let Some(field) = obj.get("shade") {
                ops.push_back(Op::OpenShade);
                ops.push_back(Op::Tap(format!("shade.{}", text_of(field))));
                ops.push_back(Op::CloseShade);
            } else if let Some(answers) = obj.get("answer") {
                ops.push_back(Op::Launch(ANSWER_SHEET_APP.into()));
                for (field, v) in answers.as_object().ok_or_else(bad)? {
                    // Resolved on screen: choice fields render one item per option.
                    ops.push_back(Op::Focus(format!("field.{field}|{}", text_of(v))));
                }
                ops.push_back(Op::Tap("submit".into()));
            } else if obj.contains_key("back") {
                ops.push_back(Op::Key(ActionKind::Back));
            } else if obj.contains_key("home") {
                ops.push_back(Op::Key(ActionKind::Home));
            } else {
                return Err(bad());
            }
        }
        Ok(Self { ops, last_scroll: None, finished: false })
    }

    /// Puts extra steps before the remaining script.
    pub fn prepend(&mut self, steps: &[Value]) -> Result<(), ScriptError> {
        let mut head = ScriptedAgent::new(steps)?.ops;
        head.extend(self.ops.drain(..));
        self.ops = head;
        Ok(())
    }

    pub fn done(&self) -> bool {
        self.finished
    }

    /// Next action for `screen`; COMPLETE once the script is exhausted.
    pub fn act(&mut self, screen: &ScreenModel) -> Result<Action, ScriptError> {
        loop {
            let Some(op) = self.ops.front().cloned() else {
                self.finished = true;
                return Ok(Action::bare(ActionKind::Complete));
            };
            let label = format!("{op:?}");
            let stuck = |reason: &str| ScriptError::Stuck { step: label.clone(), reason: reason.to_string() };
            match op {
                Op::Launch(app) => {
                    self.ops.pop_front();
                    return Ok(Action::with_value(ActionKind::Awake, app));
                }
                Op::Key(k) => {
                    self.ops.pop_front();
                    return Ok(Action::bare(k));
                }
                Op::OpenShade => {
                    self.ops.pop_front();
                    return Ok(Action::stroke(
                        ActionKind::Swipe,
                        Point::new(500, STATUS_BAR_BOTTOM / 2),
                        Point::new(500, 600),
                    ));
                }
                Op::CloseShade => {
                    self.ops.pop_front();
                    if screen.widget("shade.scrim").is_some() {
                        return Ok(Action::bare(ActionKind::Back));
                    }
                }
                Op::Tap(id) => {
                    let w = screen.widget(&id).ok_or_else(|| stuck("widget not on screen"))?;
                    let action = self.reach(screen, w).ok_or_else(|| stuck("widget covered"))?;
                    if action.kind == ActionKind::Click {
                        self.ops.pop_front();
                    }
                    return Ok(action);
                }
                Op::TapText { text, list } => {
                    let prefix = format!("{list}.");
                    let hit = screen.widgets.iter().find(|w| {
                        w.kind == WidgetKind::ListItem
                            && w.widget_id.starts_with(&prefix)
                            && w.text.as_deref() == Some(text.as_str())
                    });
                    if let Some(w) = hit {
                        let action = self.reach(screen, w).ok_or_else(|| stuck("item covered"))?;
                        if action.kind == ActionKind::Click {
                            self.ops.pop_front();
                            self.last_scroll = None;
                        }
                        return Ok(action);
                    }
                    let container = screen.widget(&list).ok_or_else(|| stuck("list not on screen"))?;
                    let seen: Vec<String> = screen
                        .widgets
                        .iter()
                        .filter(|w| w.widget_id.starts_with(&prefix))
                        .filter_map(|w| w.text.clone())
                        .collect();
                    if self.last_scroll.as_ref() == Some(&seen) {
                        return Err(stuck("item not found after scrolling to the end"));
                    }
                    self.last_scroll = Some(seen);
                    let [x0, y0, x1, y1] = container.bounds;
                    let x = (x0 + x1) / 2;
                    let span = ((y1 - y0) / 2).max(1);
                    return Ok(Action::stroke(ActionKind::Swipe, Point::new(x, y1 - 10), Point::new(x, y1 - 10 - span)));
                }
                Op::Focus(spec) => {
                    let (id, choice) = match spec.split_once('|') {
                        Some((id, v)) => (id.to_string(), Some(v.to_string())),
                        None => (spec.clone(), None),
                    };
                    if let Some(v) = &choice {
                        if screen.widget(&id).is_none() {
                            // A choice field: tap the option.
                            self.ops[0] = Op::Tap(format!("{id}.{v}"));
                            continue;
                        }
                    }
                    let w = screen.widget(&id).ok_or_else(|| stuck("field not on screen"))?;
                    if w.focused {
                        self.ops.pop_front();
                        if let Some(v) = choice {
                            self.ops.push_front(Op::Type(v));
                        }
                        continue;
                    }
                    return self.reach(screen, w).ok_or_else(|| stuck("field covered"));
                }
                Op::Type(text) => {
                    self.ops.pop_front();
                    return Ok(Action::type_text(text));
                }
            }
        }
    }

    /// CLICK on `w` when it is the topmost target at its center; otherwise
    /// BACK to dismiss whatever covers it (keyboard, shade, dialogs).
    fn reach(&self, screen: &ScreenModel, w: &Widget) -> Option<Action> {
        let c = center(w);
        match hit_test(screen, c) {
            Some(top) if top.widget_id == w.widget_id => Some(Action::click(c.x, c.y)),
            Some(_) => Some(Action::bare(ActionKind::Back)),
            None => None,
        }
    }
}

/// Anything that maps screens to actions.
pub trait Agent: Send {
    fn act(&mut self, screen: &ScreenModel) -> Result<Action, ScriptError>;
}

impl Agent for ScriptedAgent {
    fn act(&mut self, screen: &ScreenModel) -> Result<Action, ScriptError> {
        ScriptedAgent::act(self, screen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Replays the template's scripted solution.
    Oracle,
    /// The oracle preceded by a detour that creates an unrelated record.
    Sabotage,
    /// Uniform over action kinds with random arguments.
    Random,
    /// The same CLICK forever.
    Looper,
    /// ABORT at once.
    Quitter,
    /// COMPLETE at once.
    Premature,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Oracle,
        AgentKind::Sabotage,
        AgentKind::Random,
        AgentKind::Looper,
        AgentKind::Quitter,
        AgentKind::Premature,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Oracle => "oracle",
            AgentKind::Sabotage => "sabotage",
            AgentKind::Random => "random",
            AgentKind::Looper => "looper",
            AgentKind::Quitter => "quitter",
            AgentKind::Premature => "premature",
        }
    }

    pub fn parse(s: &str) -> Option<AgentKind> {
        AgentKind::ALL.into_iter().find(|k| k.label() == s)
    }
}

/// Detours for the sabotage agent: the first one whose record store the
/// instance does not expect to change is used.
fn detours() -> Vec<(&'static str, Vec<Value>)> {
    vec![
        (
            "notes/items",
            vec![
                json!({"launch": "notes"}),
                json!({"tap": "new"}),
                json!({"type": "title_field", "text": "Scratch"}),
                json!({"tap": "save"}),
                json!({"home": true}),
            ],
        ),
        (
            "provider.contacts/records",
            vec![
                json!({"launch": "contacts"}),
                json!({"tap": "new"}),
                json!({"type": "name_field", "text": "Zed Scratch"}),
                json!({"type": "phone_field", "text": "555-0199"}),
                json!({"tap": "save"}),
                json!({"home": true}),
            ],
        ),
    ]
}

struct Repeat(Action);

impl Agent for Repeat {
    fn act(&mut self, _: &ScreenModel) -> Result<Action, ScriptError> {
        Ok(self.0.clone())
    }
}

/// Seeded uniform choice of action kind; arguments drawn from fixed pools.
pub struct RandomAgent {
    rng: ChaCha8Rng,
    apps: Vec<String>,
}

const WORDS: [&str; 5] = ["hello", "42", "Alice", "2024-05-01", ""];

impl RandomAgent {
    pub fn new(seed: u64, apps: Vec<String>) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), apps }
    }

    fn point(&mut self) -> Point {
        Point::new(self.rng.gen_range(0..=1000), self.rng.gen_range(0..=1000))
    }

    fn word(&mut self) -> String {
        WORDS.choose(&mut self.rng).expect("nonempty").to_string()
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _: &ScreenModel) -> Result<Action, ScriptError> {
        let kind = *ActionKind::ALL.choose(&mut self.rng).expect("nonempty");
        let mut a = Action::bare(kind);
        match kind {
            ActionKind::Click | ActionKind::DoubleTap | ActionKind::LongPress => a.point = Some(self.point()),
            ActionKind::Swipe | ActionKind::Drag => {
                a.point1 = Some(self.point());
                a.point2 = Some(self.point());
            }
            ActionKind::Type => {
                a.value = Some(self.word());
                a.clear = Some(self.rng.gen());
            }
            ActionKind::Awake => a.value = self.apps.choose(&mut self.rng).cloned().or(Some(String::new())),
            ActionKind::Wait => a.value = Some(self.rng.gen_range(0..3).to_string()),
            ActionKind::Answer | ActionKind::Info => a.value = Some(self.word()),
            _ => {}
        }
        Ok(a)
    }
}

/// Builds an agent of `kind` for one episode. `apps` feeds the random
/// agent's AWAKE values.
pub fn make_agent(
    kind: AgentKind,
    inst: &TaskInstance,
    mask: &ExpectedChangeMask,
    apps: &[String],
) -> Result<Box<dyn Agent>, ScriptError> {
    Ok(match kind {
        AgentKind::Oracle => Box::new(ScriptedAgent::new(&inst.oracle)?),
        AgentKind::Sabotage => {
            let mut a = ScriptedAgent::new(&inst.oracle)?;
            let (_, detour) = detours()
                .into_iter()
                .find(|(path, _)| !mask.covers(path))
                .ok_or_else(|| ScriptError::Malformed("every detour target is expected to change".into()))?;
            a.prepend(&detour)?;
            Box::new(a)
        }
        AgentKind::Random => Box::new(RandomAgent::new(inst.seed, apps.to_vec())),
        AgentKind::Looper => Box::new(Repeat(Action::click(500, STATUS_BAR_BOTTOM / 2))),
        AgentKind::Quitter => Box::new(Repeat(Action::bare(ActionKind::Abort))),
        AgentKind::Premature => Box::new(Repeat(Action::bare(ActionKind::Complete))),
    })
}
