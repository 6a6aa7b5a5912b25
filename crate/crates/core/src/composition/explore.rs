use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::system::{BlockedLabel, CompositionError, Configuration, Move, System};
use crate::model::{ProtocolId, Value};
use crate::semantics::{ActionTag, StepError};

pub const DEFAULT_BOUND: usize = 10_000;

/// State graph reached from the initial configuration. Index 0 is the
/// initial configuration.
#[derive(Debug, Clone)]
pub struct ExplorationResult {
    pub states: Vec<Configuration>,
    pub edges: Vec<(usize, ActionTag, usize)>,
    /// Non-final configurations without successors.
    pub deadlocks: Vec<usize>,
    pub completions: Vec<usize>,
    /// Some successor was dropped because the bound was reached.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplorationSummary {
    pub states: usize,
    pub transitions: usize,
    pub completions: usize,
    pub deadlocks: usize,
    pub truncated: bool,
}

impl ExplorationResult {
    pub fn summary(&self) -> ExplorationSummary {
        ExplorationSummary {
            states: self.states.len(),
            transitions: self.edges.len(),
            completions: self.completions.len(),
            deadlocks: self.deadlocks.len(),
            truncated: self.truncated,
        }
    }

    /// Outgoing edges of `state`, in enumeration order.
    pub fn successors(&self, state: usize) -> impl Iterator<Item = (&ActionTag, usize)> {
        self.edges
            .iter()
            .filter(move |(s, _, _)| *s == state)
            .map(|(_, t, d)| (t, *d))
    }
}

/// Breadth-first search over configurations, keeping at most `bound`
/// distinct ones.
pub fn explore(system: &System, bound: usize) -> Result<ExplorationResult, StepError> {
    let bound = bound.max(1);
    let mut states = vec![system.initial.clone()];
    let mut index: HashMap<Configuration, usize> = HashMap::from([(system.initial.clone(), 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut edges = Vec::new();
    let mut deadlocks = Vec::new();
    let mut completions = Vec::new();
    let mut truncated = false;
    while let Some(i) = queue.pop_front() {
        let current = states[i].clone();
        let moves = system.enabled(&current)?;
        if current.is_complete() {
            completions.push(i);
        } else if moves.is_empty() {
            deadlocks.push(i);
        }
        for (tag, m) in moves {
            let next = system.apply(&current, &m)?;
            let j = match index.get(&next) {
                Some(&j) => j,
                None if states.len() < bound => {
                    let j = states.len();
                    index.insert(next.clone(), j);
                    states.push(next);
                    queue.push_back(j);
                    j
                }
                None => {
                    truncated = true;
                    continue;
                }
            };
            edges.push((i, tag, j));
        }
    }
    completions.sort_unstable();
    deadlocks.sort_unstable();
    Ok(ExplorationResult {
        states,
        edges,
        deadlocks,
        completions,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum TraceEvent {
    Step { index: usize, action: ActionTag },
    ContextUpdate { instance: ProtocolId, name: String, value: Value },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("step {step}: choice {index} out of range ({available} moves enabled)")]
    InvalidChoice { step: usize, index: usize, available: usize },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
}

/// Interactive, strictly sequential execution of one path.
#[derive(Debug, Clone)]
pub struct TraceRunner {
    system: System,
    current: Configuration,
    events: Vec<TraceEvent>,
    configurations: Vec<Configuration>,
}

impl TraceRunner {
    pub fn new(system: System) -> Self {
        let current = system.initial.clone();
        TraceRunner {
            configurations: vec![current.clone()],
            current,
            system,
            events: Vec::new(),
        }
    }

    pub fn current(&self) -> &Configuration {
        &self.current
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Configurations visited, starting with the initial one.
    pub fn configurations(&self) -> &[Configuration] {
        &self.configurations
    }

    pub fn actions(&self) -> Vec<&ActionTag> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Step { action, .. } => Some(action),
                TraceEvent::ContextUpdate { .. } => None,
            })
            .collect()
    }

    pub fn moves(&self) -> Result<Vec<(ActionTag, Move)>, StepError> {
        self.system.enabled(&self.current)
    }

    pub fn blocked(&self) -> Result<Vec<BlockedLabel>, StepError> {
        self.system.blocked(&self.current)
    }

    pub fn is_complete(&self) -> bool {
        self.current.is_complete()
    }

    pub fn is_deadlocked(&self) -> Result<bool, StepError> {
        Ok(!self.current.is_complete() && self.moves()?.is_empty())
    }

    /// Takes the `index`-th enabled move.
    pub fn step(&mut self, index: usize) -> Result<&ActionTag, TraceError> {
        let moves = self.moves()?;
        let available = moves.len();
        let (action, m) = moves.into_iter().nth(index).ok_or(TraceError::InvalidChoice {
            step: self.actions().len(),
            index,
            available,
        })?;
        self.current = self.system.apply(&self.current, &m)?;
        self.configurations.push(self.current.clone());
        self.events.push(TraceEvent::Step { index, action });
        match self.events.last() {
            Some(TraceEvent::Step { action, .. }) => Ok(action),
            _ => unreachable!(),
        }
    }

    pub fn update_context(&mut self, instance: &ProtocolId, name: &str, value: Value) -> Result<(), TraceError> {
        self.current = self.system.update_context(&self.current, instance, name, value.clone())?;
        *self.configurations.last_mut().expect("initial configuration") = self.current.clone();
        self.events.push(TraceEvent::ContextUpdate {
            instance: instance.clone(),
            name: name.to_owned(),
            value,
        });
        Ok(())
    }

    /// Re-applies recorded events on a fresh runner.
    pub fn replay(system: System, events: &[TraceEvent]) -> Result<TraceRunner, TraceError> {
        let mut r = TraceRunner::new(system);
        for e in events {
            match e {
                TraceEvent::Step { index, .. } => {
                    r.step(*index)?;
                }
                TraceEvent::ContextUpdate { instance, name, value } => {
                    r.update_context(instance, name, value.clone())?;
                }
            }
        }
        Ok(r)
    }
}

/// Follows `schedule`, picking the given index among the enabled moves at
/// each step.
pub fn run_trace(system: &System, schedule: &[usize]) -> Result<TraceRunner, TraceError> {
    let mut r = TraceRunner::new(system.clone());
    for &i in schedule {
        r.step(i)?;
    }
    Ok(r)
}
