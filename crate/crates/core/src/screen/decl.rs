//! Per-app screen declarations: which widgets each navigation state shows.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use super::ScreenError;
use crate::nav::GuardExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclKind {
    Label,
    Button,
    TextField,
    Toggle,
    ImageRef,
    Container,
    /// Scrollable container whose children come from a store list.
    List,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemDecl {
    pub text: String,
    pub trigger: Option<String>,
    pub params: BTreeMap<String, Value>,
    pub enabled_when: Option<GuardExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidgetDecl {
    pub id: String,
    pub kind: DeclKind,
    pub bounds: [i32; 4],
    pub z: i32,
    pub text: Option<String>,
    pub trigger: Option<String>,
    pub params: BTreeMap<String, Value>,
    pub enabled_when: Option<GuardExpr>,
    pub visible_when: Option<GuardExpr>,
    /// Store-rooted path template for text fields and toggles.
    pub bind: Option<String>,
    pub placeholder: Option<String>,
    /// Trigger fired by ENTER while this field is focused.
    pub commit: Option<String>,
    /// Store-rooted path template of the list source (list only).
    pub source: Option<String>,
    pub item_height: i32,
    pub item: Option<ItemDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalDecl {
    pub bounds: [i32; 4],
    /// Trigger fired when the scrim outside the modal is clicked.
    pub dismiss: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateScreen {
    pub title: Option<String>,
    pub extends: Option<String>,
    pub modal: Option<ModalDecl>,
    pub widgets: Vec<WidgetDecl>,
}

/// Parsed `screens.json`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenSpec {
    pub states: BTreeMap<String, StateScreen>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    text: String,
    #[serde(default)]
    trigger: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default)]
    enabled_when: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWidget {
    id: String,
    kind: DeclKind,
    bounds: [i32; 4],
    #[serde(default)]
    z: i32,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    trigger: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default)]
    enabled_when: Option<Value>,
    #[serde(default)]
    visible_when: Option<Value>,
    #[serde(default)]
    bind: Option<String>,
    #[serde(default)]
    placeholder: Option<String>,
    #[serde(default)]
    commit: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    item_height: Option<i32>,
    #[serde(default)]
    item: Option<RawItem>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModal {
    bounds: [i32; 4],
    #[serde(default)]
    dismiss: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    extends: Option<String>,
    #[serde(default)]
    modal: Option<RawModal>,
    #[serde(default)]
    widgets: Vec<RawWidget>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScreens {
    states: BTreeMap<String, RawState>,
}

fn guard(raw: Option<Value>) -> Result<Option<GuardExpr>, ScreenError> {
    raw.map(|g| GuardExpr::parse(&g).map_err(|e| ScreenError::Decl(e.to_string()))).transpose()
}

pub(crate) fn valid_bounds(b: [i32; 4]) -> bool {
    let [x0, y0, x1, y1] = b;
    (0..=1000).contains(&x0) && (0..=1000).contains(&y0) && x0 < x1 && y0 < y1 && x1 <= 1000 && y1 <= 1000
}

impl ScreenSpec {
    pub fn parse(bytes: &[u8]) -> Result<ScreenSpec, ScreenError> {
        let raw: RawScreens =
            serde_json::from_slice(bytes).map_err(|e| ScreenError::Decl(e.to_string()))?;
        let mut states = BTreeMap::new();
        for (name, s) in raw.states {
            let mut widgets = Vec::with_capacity(s.widgets.len());
            for w in s.widgets {
                if !valid_bounds(w.bounds) {
                    return Err(ScreenError::Decl(format!("{name}/{}: bounds {:?} out of range", w.id, w.bounds)));
                }
                if w.kind == DeclKind::List && (w.source.is_none() || w.item.is_none()) {
                    return Err(ScreenError::Decl(format!("{name}/{}: list needs `source` and `item`", w.id)));
                }
                if matches!(w.kind, DeclKind::TextField | DeclKind::Toggle) && w.bind.is_none() {
                    return Err(ScreenError::Decl(format!("{name}/{}: needs `bind`", w.id)));
                }
                if !(0..100).contains(&w.z) {
                    return Err(ScreenError::Decl(format!("{name}/{}: page z must be in 0..100", w.id)));
                }
                let item = w
                    .item
                    .map(|i| {
                        Ok::<_, ScreenError>(ItemDecl {
                            text: i.text,
                            trigger: i.trigger,
                            params: i.params,
                            enabled_when: guard(i.enabled_when)?,
                        })
                    })
                    .transpose()?;
                widgets.push(WidgetDecl {
                    id: w.id,
                    kind: w.kind,
                    bounds: w.bounds,
                    z: w.z,
                    text: w.text,
                    trigger: w.trigger,
                    params: w.params,
                    enabled_when: guard(w.enabled_when)?,
                    visible_when: guard(w.visible_when)?,
                    bind: w.bind,
                    placeholder: w.placeholder,
                    commit: w.commit,
                    source: w.source,
                    item_height: w.item_height.unwrap_or(80).max(1),
                    item,
                });
            }
            let modal = match s.modal {
                Some(m) if !valid_bounds(m.bounds) => {
                    return Err(ScreenError::Decl(format!("{name}: modal bounds out of range")))
                }
                Some(m) => Some(ModalDecl { bounds: m.bounds, dismiss: m.dismiss }),
                None => None,
            };
            states.insert(name, StateScreen { title: s.title, extends: s.extends, modal, widgets });
        }
        for (name, s) in &states {
            if let Some(base) = &s.extends {
                if !states.contains_key(base) {
                    return Err(ScreenError::Decl(format!("{name} extends unknown screen {base}")));
                }
            }
        }
        Ok(ScreenSpec { states })
    }

    /// Layers for `state`, base first. Each layer is (screen, is_modal).
    pub fn layers(&self, state: &str) -> Vec<&StateScreen> {
        let mut chain = Vec::new();
        let mut at = self.states.get(state);
        while let Some(s) = at {
            if chain.len() > 8 {
                break;
            }
            chain.push(s);
            at = s.extends.as_ref().and_then(|b| self.states.get(b));
        }
        chain.reverse();
        chain
    }

    /// Every trigger id referenced by a widget or list item.
    pub fn triggers(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (name, s) in &self.states {
            for w in &s.widgets {
                for t in [&w.trigger, &w.commit].into_iter().flatten() {
                    out.push((name.as_str(), t.as_str()));
                }
                if let Some(t) = w.item.as_ref().and_then(|i| i.trigger.as_ref()) {
                    out.push((name.as_str(), t.as_str()));
                }
            }
            if let Some(t) = s.modal.as_ref().and_then(|m| m.dismiss.as_ref()) {
                out.push((name.as_str(), t.as_str()));
            }
        }
        out
    }
}
