//! Widget-tree observation, coordinate mapping and the action interface.

mod action;
mod decl;
mod model;
mod render;

use thiserror::Error;

pub use action::{Action, ActionKind};
pub use decl::{DeclKind, ItemDecl, ModalDecl, ScreenSpec, StateScreen, WidgetDecl};
pub use model::{
    denormalize, hit_test, normalize, serialize_screen, Point, ScreenModel, ScrollInfo, StatusBar, Widget,
    WidgetKind, DEFAULT_DIMS, NORMALIZED_MAX, SCREEN_SCHEMA_VERSION,
};
pub use render::{
    render, KEYBOARD_BOUNDS, LAUNCHER, STATUS_BAR_BOTTOM, Z_CHOOSER, Z_KEYBOARD, Z_PERMISSION, Z_RECENTS, Z_SHADE,
    Z_STATUS_BAR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreenError {
    #[error("screen declaration: {0}")]
    Decl(String),
    #[error("point outside the screen")]
    OutOfBounds,
    #[error("malformed action: {0}")]
    MalformedAction(String),
    #[error("episode already terminated")]
    ActionAfterTermination,
    #[error("internal: {0}")]
    Internal(String),
}
