use serde::{Deserialize, Serialize};

use super::model::Point;
use super::ScreenError;
use crate::state::canonical_serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Click,
    DoubleTap,
    LongPress,
    Type,
    Swipe,
    Drag,
    Back,
    Home,
    Recent,
    Enter,
    Wait,
    Awake,
    Answer,
    Complete,
    Abort,
    Info,
    Noop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 17] = [
        ActionKind::Click,
        ActionKind::DoubleTap,
        ActionKind::LongPress,
        ActionKind::Type,
        ActionKind::Swipe,
        ActionKind::Drag,
        ActionKind::Back,
        ActionKind::Home,
        ActionKind::Recent,
        ActionKind::Enter,
        ActionKind::Wait,
        ActionKind::Awake,
        ActionKind::Answer,
        ActionKind::Complete,
        ActionKind::Abort,
        ActionKind::Info,
        ActionKind::Noop,
    ];
}

/// One agent action. Which optional fields are required depends on `kind`;
/// see [`Action::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point1: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point2: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear: Option<bool>,
}

impl Action {
    pub fn bare(kind: ActionKind) -> Self {
        Self { kind, point: None, point1: None, point2: None, value: None, clear: None }
    }

    pub fn at(kind: ActionKind, x: i32, y: i32) -> Self {
        Self { point: Some(Point::new(x, y)), ..Self::bare(kind) }
    }

    pub fn click(x: i32, y: i32) -> Self {
        Self::at(ActionKind::Click, x, y)
    }

    pub fn with_value(kind: ActionKind, value: impl Into<String>) -> Self {
        Self { value: Some(value.into()), ..Self::bare(kind) }
    }

    /// TYPE into the focused field, replacing its text.
    pub fn type_text(value: impl Into<String>) -> Self {
        Self { clear: Some(true), ..Self::with_value(ActionKind::Type, value) }
    }

    pub fn stroke(kind: ActionKind, from: Point, to: Point) -> Self {
        Self { point1: Some(from), point2: Some(to), ..Self::bare(kind) }
    }

    pub fn validate(&self) -> Result<(), ScreenError> {
        let bad = |why: &str| Err(ScreenError::MalformedAction(format!("{:?}: {why}", self.kind)));
        for p in [self.point, self.point1, self.point2].into_iter().flatten() {
            if !p.in_range() {
                return bad("point outside [0,1000]");
            }
        }
        match self.kind {
            ActionKind::Click | ActionKind::DoubleTap | ActionKind::LongPress if self.point.is_none() => {
                bad("requires point")
            }
            ActionKind::Type | ActionKind::Answer | ActionKind::Info | ActionKind::Awake if self.value.is_none() => {
                bad("requires value")
            }
            ActionKind::Swipe | ActionKind::Drag if self.point1.is_none() || self.point2.is_none() => {
                bad("requires point1 and point2")
            }
            ActionKind::Wait => match self.wait_seconds() {
                Some(_) => Ok(()),
                None => bad("requires a non-negative numeric value"),
            },
            _ => Ok(()),
        }
    }

    pub fn wait_seconds(&self) -> Option<f64> {
        let v: f64 = self.value.as_deref()?.trim().parse().ok()?;
        (v.is_finite() && v >= 0.0).then_some(v)
    }

    /// Identity used by loop detection: canonical bytes of the action.
    pub fn fingerprint(&self) -> Vec<u8> {
        canonical_serialize(&serde_json::to_value(self).expect("action serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_form() {
        let a: Action = serde_json::from_value(json!({"kind": "CLICK", "point": [10, 20]})).unwrap();
        assert_eq!(a, Action::click(10, 20));
        assert_eq!(serde_json::to_value(&a).unwrap(), json!({"kind": "CLICK", "point": [10, 20]}));
        assert!(serde_json::from_value::<Action>(json!({"kind": "FLY"})).is_err());
    }

    #[test]
    fn parameter_presence() {
        assert!(Action::bare(ActionKind::Click).validate().is_err());
        assert!(Action::bare(ActionKind::Awake).validate().is_err());
        assert!(Action::with_value(ActionKind::Wait, "soon").validate().is_err());
        assert!(Action::with_value(ActionKind::Wait, "-1").validate().is_err());
        assert!(Action::with_value(ActionKind::Wait, "1.5").validate().is_ok());
        assert!(Action::click(1001, 0).validate().is_err());
        for k in [ActionKind::Back, ActionKind::Home, ActionKind::Recent, ActionKind::Enter, ActionKind::Noop] {
            assert!(Action::bare(k).validate().is_ok());
        }
    }

    #[test]
    fn fingerprints_distinguish_values() {
        assert_eq!(Action::click(1, 2).fingerprint(), Action::click(1, 2).fingerprint());
        assert_ne!(Action::click(1, 2).fingerprint(), Action::click(2, 1).fingerprint());
    }
}
