//! Layered JSON state.
//!
//! A [`StateRegistry`] holds named stores, each assigned to a tier. World
//! data is read-only and never captured; runtime overlay and OS runtime
//! stores make up a [`Snapshot`]; volatile stores are reset whenever a
//! snapshot is restored.

mod diff;
mod path;
mod registry;
mod snapshot;
mod value;

use thiserror::Error;

pub use diff::{apply_diff, diff, diff_values, DiffEntry, DiffKind, StateDiff};
pub use path::{cmp_segments, escape, lookup, parse_index, unescape, StatePath};
pub use registry::{
    Checkpoint, Limits, StateRead, StateRegistry, StoreHandle, StoreSpec, Tier,
};
pub use snapshot::{Snapshot, SNAPSHOT_HEADER};
pub use value::{
    canonical_serialize, canonical_string, cmp_numbers, depth, display_text, loose_eq, object,
    parse_value, subset_match, StateValue, DEFAULT_MAX_DEPTH,
};

pub(crate) use path::remove_at;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("store `{0}` is already registered")]
    DuplicateStoreId(String),
    #[error("store `{0}`: volatile stores cannot be persisted")]
    InvalidTierCombination(String),
    #[error("store `{store}` shadows unknown or non-world store `{target}`")]
    InvalidShadow { store: String, target: String },
    #[error("store `{0}` is world data and cannot be written")]
    WriteToWorldData(String),
    #[error("unknown store `{0}`")]
    UnknownStore(String),
    #[error("unknown path `{0}`")]
    UnknownPath(String),
    #[error("path `{0}` does not match the value's shape")]
    PathTypeMismatch(String),
    #[error("invalid path `{0}`")]
    InvalidPath(String),
    #[error("store sets differ: {0}")]
    StoreSetMismatch(String),
    #[error("value nesting depth {depth} exceeds limit {limit}")]
    DepthExceeded { depth: usize, limit: usize },
    #[error("store `{store}` would hold {size} bytes, limit is {limit}")]
    ValueTooLarge { store: String, size: usize, limit: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("patch conflict at `{0}`")]
    PatchConflict(String),
}
