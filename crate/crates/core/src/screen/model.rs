use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ScreenError;
use crate::os::HardwareState;
use crate::state::canonical_serialize;

pub const SCREEN_SCHEMA_VERSION: u32 = 1;
pub const NORMALIZED_MAX: i32 = 1000;
pub const DEFAULT_DIMS: (u32, u32) = (1080, 2400);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Label,
    Button,
    TextField,
    ListItem,
    Toggle,
    ImageRef,
    Container,
    ModalScrim,
}

/// Scroll bookkeeping for a list container.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScrollInfo {
    pub key: String,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub widget_id: String,
    pub kind: WidgetKind,
    pub bounds: [i32; 4],
    pub z: i32,
    pub enabled: bool,
    pub focused: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checked: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trigger_params: BTreeMap<String, Value>,
    /// Absolute store path edited by a text field or toggle.
    #[serde(skip)]
    pub bind: Option<String>,
    #[serde(skip)]
    pub commit: Option<String>,
    #[serde(skip)]
    pub scroll: Option<ScrollInfo>,
}

impl Widget {
    pub fn new(id: impl Into<String>, kind: WidgetKind, bounds: [i32; 4], z: i32) -> Self {
        Self {
            widget_id: id.into(),
            kind,
            bounds,
            z,
            enabled: true,
            focused: false,
            text: None,
            placeholder: None,
            checked: None,
            trigger_id: None,
            trigger_params: BTreeMap::new(),
            bind: None,
            commit: None,
            scroll: None,
        }
    }

    pub fn text(mut self, t: impl Into<String>) -> Self {
        self.text = Some(t.into());
        self
    }

    pub fn trigger(mut self, id: impl Into<String>, params: BTreeMap<String, Value>) -> Self {
        self.trigger_id = Some(id.into());
        self.trigger_params = params;
        self
    }

    /// Half-open containment, except that the 1000 edge belongs to
    /// widgets reaching it.
    pub fn contains(&self, p: Point) -> bool {
        let [x0, y0, x1, y1] = self.bounds;
        let inside = |v: i32, lo: i32, hi: i32| v >= lo && (v < hi || (hi == NORMALIZED_MAX && v == hi));
        inside(p.x, x0, x1) && inside(p.y, y0, y1)
    }

    pub fn interactive(&self) -> bool {
        self.kind != WidgetKind::Container
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusBar {
    pub clock: String,
    #[serde(flatten)]
    pub hardware: HardwareState,
    pub notifications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenModel {
    pub version: u32,
    /// `launcher` when no task is in the foreground.
    pub foreground_app: String,
    pub route: String,
    pub screen_dims_px: (u32, u32),
    pub status_bar: StatusBar,
    /// Sorted by (z, declaration order).
    pub widgets: Vec<Widget>,
}

impl ScreenModel {
    pub fn widget(&self, id: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.widget_id == id)
    }

    pub fn focused(&self) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.focused)
    }

    /// Widgets carrying `trigger_id`, in z order.
    pub fn with_trigger<'a>(&'a self, trigger_id: &'a str) -> impl Iterator<Item = &'a Widget> + 'a {
        self.widgets.iter().filter(move |w| w.trigger_id.as_deref() == Some(trigger_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn in_range(self) -> bool {
        (0..=NORMALIZED_MAX).contains(&self.x) && (0..=NORMALIZED_MAX).contains(&self.y)
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[i32; 2]>::deserialize(d)?;
        Ok(Point { x, y })
    }
}

/// Topmost widget containing `p`; containers never win.
pub fn hit_test(screen: &ScreenModel, p: Point) -> Option<&Widget> {
    screen.widgets.iter().rev().find(|w| w.interactive() && w.contains(p))
}

fn axis_to_px(n: i32, dim: u32) -> Result<u32, ScreenError> {
    if !(0..=NORMALIZED_MAX).contains(&n) || dim == 0 {
        return Err(ScreenError::OutOfBounds);
    }
    let px = (n as u64 * dim as u64 / NORMALIZED_MAX as u64) as u32;
    Ok(px.min(dim - 1))
}

fn axis_to_norm(px: u32, dim: u32) -> Result<i32, ScreenError> {
    if px >= dim {
        return Err(ScreenError::OutOfBounds);
    }
    // Round to nearest so that a pixel maps back to its source unit.
    Ok(((px as u64 * NORMALIZED_MAX as u64 * 2 + dim as u64) / (2 * dim as u64)) as i32)
}

/// Normalized to pixel: `floor(n * dim / 1000)`, with 1000 clamped to `dim - 1`.
pub fn denormalize(p: Point, dims: (u32, u32)) -> Result<(u32, u32), ScreenError> {
    Ok((axis_to_px(p.x, dims.0)?, axis_to_px(p.y, dims.1)?))
}

pub fn normalize(px: (u32, u32), dims: (u32, u32)) -> Result<Point, ScreenError> {
    Ok(Point::new(axis_to_norm(px.0, dims.0)?, axis_to_norm(px.1, dims.1)?))
}

/// Canonical wire bytes of a screen.
pub fn serialize_screen(screen: &ScreenModel) -> Vec<u8> {
    canonical_serialize(&serde_json::to_value(screen).expect("screen serializes"))
}

/// Orders widgets by z, keeping declaration order among equal z.
pub fn sort_widgets(widgets: &mut [Widget]) {
    widgets.sort_by_key(|w| w.z);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn screen(widgets: Vec<Widget>) -> ScreenModel {
        ScreenModel {
            version: SCREEN_SCHEMA_VERSION,
            foreground_app: "x".into(),
            route: "/".into(),
            screen_dims_px: DEFAULT_DIMS,
            status_bar: StatusBar { clock: "00:00".into(), hardware: HardwareState::default(), notifications: 0 },
            widgets,
        }
    }

    #[test]
    fn coordinate_examples() {
        assert_eq!(denormalize(Point::new(500, 500), DEFAULT_DIMS).unwrap(), (540, 1200));
        assert_eq!(denormalize(Point::new(0, 0), DEFAULT_DIMS).unwrap(), (0, 0));
        assert_eq!(denormalize(Point::new(1000, 1000), DEFAULT_DIMS).unwrap(), (1079, 2399));
        assert_eq!(denormalize(Point::new(1001, 0), DEFAULT_DIMS), Err(ScreenError::OutOfBounds));
        assert_eq!(normalize((1080, 0), DEFAULT_DIMS), Err(ScreenError::OutOfBounds));
        assert_eq!(normalize((540, 1200), DEFAULT_DIMS).unwrap(), Point::new(500, 500));
    }

    #[test]
    fn hit_test_prefers_z_then_later_declaration() {
        let mut ws = vec![
            Widget::new("a", WidgetKind::Button, [0, 0, 500, 500], 1),
            Widget::new("scrim", WidgetKind::ModalScrim, [0, 0, 1000, 1000], 9),
            Widget::new("b", WidgetKind::Button, [0, 0, 500, 500], 1),
            Widget::new("box", WidgetKind::Container, [600, 600, 900, 900], 50),
        ];
        sort_widgets(&mut ws);
        let s = screen(ws);
        assert_eq!(hit_test(&s, Point::new(10, 10)).unwrap().widget_id, "scrim");
        let s2 = screen(s.widgets.iter().filter(|w| w.widget_id != "scrim").cloned().collect());
        assert_eq!(hit_test(&s2, Point::new(10, 10)).unwrap().widget_id, "b");
        assert!(hit_test(&s2, Point::new(700, 700)).is_none());
        assert!(hit_test(&s2, Point::new(500, 10)).is_none());
    }

    #[test]
    fn edge_1000_belongs_to_full_width_widgets() {
        let s = screen(vec![Widget::new("full", WidgetKind::Label, [0, 0, 1000, 1000], 0)]);
        assert!(hit_test(&s, Point::new(1000, 1000)).is_some());
    }

    #[test]
    fn skipped_fields_stay_off_the_wire() {
        let mut w = Widget::new("f", WidgetKind::TextField, [0, 0, 10, 10], 0);
        w.bind = Some("notes/draft".into());
        let s = screen(vec![w]);
        let text = String::from_utf8(serialize_screen(&s)).unwrap();
        assert!(!text.contains("notes/draft"));
        assert_eq!(serialize_screen(&s), serialize_screen(&s.clone()));
    }
}
