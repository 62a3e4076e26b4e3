//! A single judged episode: an environment forked from a task instance,
//! with step budget, loop detection and goal tracking.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::env::{Declared, Environment};
use crate::metrics::{classify_episode, EpisodeTrace, EpisodeVerdict, ExpectedChangeMask, MetricsError, Truncation};
use crate::os::AppCatalog;
use crate::screen::{Action, ScreenError, ScreenModel};
use crate::script::{Agent, ScriptError};
use crate::state::{StateError, StateRegistry};
use crate::task::{judge, TaskInstance};

/// Consecutive identical actions that end an episode.
pub const LOOP_DETECT: usize = 10;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Screen(#[from] ScreenError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub screen: ScreenModel,
    pub terminated: bool,
    pub truncated_by: Truncation,
    pub step: u32,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub env: Environment,
    pub inst: Arc<TaskInstance>,
    mask: ExpectedChangeMask,
    steps: u32,
    ring: VecDeque<Vec<u8>>,
    truncated_by: Truncation,
    goal_reached_at: Option<u32>,
}

impl Episode {
    /// Forks `base` at the instance's initial snapshot.
    pub fn start(catalog: Arc<AppCatalog>, base: &StateRegistry, inst: Arc<TaskInstance>) -> Result<Self, StateError> {
        let reg = base.fork(&inst.initial_snapshot)?;
        let mask = ExpectedChangeMask::for_instance(&inst, &catalog);
        Ok(Self {
            env: Environment::from_registry(catalog, reg),
            inst,
            mask,
            steps: 0,
            ring: VecDeque::with_capacity(LOOP_DETECT),
            truncated_by: Truncation::None,
            goal_reached_at: None,
        })
    }

    pub fn mask(&self) -> &ExpectedChangeMask {
        &self.mask
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn truncated_by(&self) -> Truncation {
        self.truncated_by
    }

    /// Declared by the agent or truncated by the harness.
    pub fn finished(&self) -> bool {
        self.env.terminated() || self.truncated_by != Truncation::None
    }

    pub fn observe(&self) -> ScreenModel {
        self.env.render()
    }

    pub fn step(&mut self, action: &Action) -> Result<StepReport, ScreenError> {
        if self.finished() {
            return Err(ScreenError::ActionAfterTermination);
        }
        let out = self.env.execute(action)?;
        self.steps += 1;
        if self.ring.len() == LOOP_DETECT {
            self.ring.pop_front();
        }
        self.ring.push_back(action.fingerprint());
        if self.goal_reached_at.is_none() {
            let snap = self.env.snapshot();
            if judge(&self.inst, &snap, None).is_ok_and(|j| j.goal_success) {
                self.goal_reached_at = Some(self.steps);
            }
        }
        if !out.terminated {
            if self.ring.len() == LOOP_DETECT && self.ring.iter().all(|f| *f == self.ring[0]) {
                self.truncated_by = Truncation::LoopDetect;
            } else if self.steps >= self.inst.step_budget {
                self.truncated_by = Truncation::Budget;
            }
        }
        Ok(StepReport { screen: out.screen, terminated: self.finished(), truncated_by: self.truncated_by, step: self.steps })
    }

    pub fn trace(&self) -> EpisodeTrace {
        EpisodeTrace {
            steps_used: self.steps,
            truncated_by: self.truncated_by,
            declared: self.env.declared(),
            goal_reached_at: self.goal_reached_at,
        }
    }

    pub fn declared(&self) -> Declared {
        self.env.declared()
    }

    pub fn verdict(&mut self) -> Result<EpisodeVerdict, MetricsError> {
        let terminal = self.env.snapshot();
        classify_episode(&self.inst, &self.trace(), &terminal, &self.mask, None)
    }

    /// Drives `agent` until the episode ends, then judges it.
    pub fn run(&mut self, agent: &mut dyn Agent) -> Result<EpisodeVerdict, EpisodeError> {
        while !self.finished() {
            let action = agent.act(&self.observe())?;
            self.step(&action)?;
        }
        Ok(self.verdict()?)
    }
}
