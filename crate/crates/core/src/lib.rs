//! Headless, deterministic simulation kernel for mobile GUI agents.

pub mod env;
pub mod episode;
pub mod metrics;
pub mod nav;
pub mod os;
pub mod screen;
pub mod script;
pub mod state;
pub mod task;
