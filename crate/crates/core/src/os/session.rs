use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::nav::NavCursor;
use crate::state::StateValue;

/// One task: an app's activity stack. Each activity carries its own
/// navigation cursor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStack {
    pub task_id: u64,
    pub app_id: String,
    pub activities: Vec<NavCursor>,
    #[serde(default)]
    pub backgrounded: bool,
}

impl TaskStack {
    pub fn top(&self) -> &NavCursor {
        self.activities.last().expect("live tasks have an activity")
    }

    pub fn top_mut(&mut self) -> &mut NavCursor {
        self.activities.last_mut().expect("live tasks have an activity")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRequest {
    pub caller_task: u64,
    pub caller_app: String,
    /// Overlay path relative to the caller's store.
    pub slot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingResult {
    pub token: u64,
    pub callee_task: u64,
    pub request: ResultRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChooserState {
    pub intent_type: String,
    pub payload: StateValue,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub reply: Option<ResultRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermissionRequest {
    pub app_id: String,
    pub permission: String,
    pub transition: String,
    #[serde(default)]
    pub params: BTreeMap<String, StateValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub topic: String,
    pub text: String,
}

/// OS runtime state: tasks, system UI and focus. Lives in the `os.session`
/// store so that snapshots capture it; it is not persisted, so a reboot
/// clears it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub tasks: Vec<TaskStack>,
    pub foreground: Option<u64>,
    /// Alive task ids, most recently foregrounded first.
    pub recents: Vec<u64>,
    pub next_task_id: u64,
    pub keyboard: bool,
    pub focus: Option<String>,
    pub shade_open: bool,
    pub recents_open: bool,
    pub chooser: Option<ChooserState>,
    pub permission: Option<PermissionRequest>,
    pub pending_results: Vec<PendingResult>,
    pub next_token: u64,
    /// Scroll offsets keyed by `app:state:widget`.
    pub scroll: BTreeMap<String, i64>,
    pub notifications: Vec<Notification>,
    pub info_events: Vec<String>,
}

impl Default for Session {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            foreground: None,
            recents: Vec::new(),
            next_task_id: 1,
            keyboard: false,
            focus: None,
            shade_open: false,
            recents_open: false,
            chooser: None,
            permission: None,
            pending_results: Vec::new(),
            next_token: 1,
            scroll: BTreeMap::new(),
            notifications: Vec::new(),
            info_events: Vec::new(),
        }
    }
}

impl Session {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("session serializes")
    }

    pub fn task(&self, id: u64) -> Option<&TaskStack> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    pub fn task_mut(&mut self, id: u64) -> Option<&mut TaskStack> {
        self.tasks.iter_mut().find(|t| t.task_id == id)
    }

    pub fn task_for_app(&self, app_id: &str) -> Option<&TaskStack> {
        self.tasks.iter().find(|t| t.app_id == app_id)
    }

    pub fn foreground_task(&self) -> Option<&TaskStack> {
        self.foreground.and_then(|id| self.task(id))
    }

    pub fn foreground_task_mut(&mut self) -> Option<&mut TaskStack> {
        let id = self.foreground?;
        self.task_mut(id)
    }

    pub fn foreground_app(&self) -> Option<&str> {
        self.foreground_task().map(|t| t.app_id.as_str())
    }

    /// Clears focus and the keyboard; used whenever the visible page changes.
    pub fn blur(&mut self) {
        self.focus = None;
        self.keyboard = false;
    }

    pub(crate) fn touch_recent(&mut self, id: u64) {
        self.recents.retain(|&t| t != id);
        self.recents.insert(0, id);
    }
}
