//! Choice points, explicit-state search and symbolic execution.

mod choice;
mod symex;

pub use choice::*;
pub use symex::*;

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::Serialize;

use crate::harness::Coverage;
use crate::pipeline;
use crate::runtime_state::{Config, Status};

/// Anything the search can step: one node or a whole network.
pub trait System: Clone {
    /// Takes one transition, resolving choices through `chooser`.
    fn step(&mut self, chooser: &mut dyn Chooser, cov: &mut Coverage) -> Result<(), Halt>;
    fn is_terminal(&self) -> bool;
    fn state_hash(&self) -> u64;
}

impl System for Config {
    fn step(&mut self, chooser: &mut dyn Chooser, cov: &mut Coverage) -> Result<(), Halt> {
        pipeline::step(self, chooser, cov)
    }

    fn is_terminal(&self) -> bool {
        self.is_stuck() || self.input.is_empty()
    }

    fn state_hash(&self) -> u64 {
        self.snapshot_hash()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_states: usize,
    pub max_depth: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_states: 100_000, max_depth: 1_000 }
    }
}

#[derive(Clone, Debug)]
pub struct Terminal<S> {
    pub state: S,
    pub path: Vec<Taken>,
}

#[derive(Clone, Debug)]
pub struct SearchResult<S> {
    pub terminals: Vec<Terminal<S>>,
    pub states: usize,
    /// Some branch was cut by the state or depth budget.
    pub budget_exceeded: bool,
    pub coverage: Coverage,
}

/// All successors of `state`: one per combination of focused choices.
pub fn successors<S: System>(state: &S, focus: &BTreeSet<ChoiceKind>, cov: &mut Coverage) -> Vec<(S, Vec<Taken>)> {
    let mut out = Vec::new();
    let mut scripts = vec![Vec::new()];
    while let Some(script) = scripts.pop() {
        let mut s = state.clone();
        let mut chooser = ScriptChooser::new(focus.clone(), script.clone());
        match s.step(&mut chooser, cov) {
            Ok(()) => out.push((s, chooser.taken)),
            Err(Halt::Choice { alternatives, .. }) => {
                for k in (0..alternatives).rev() {
                    let mut next = script.clone();
                    next.push(k);
                    scripts.push(next);
                }
            }
        }
    }
    out
}

/// Breadth-first exploration with visited-state pruning. Choice kinds
/// outside `focus` take their canonical alternative.
pub fn search<S: System>(initial: S, budget: Budget, focus: &BTreeSet<ChoiceKind>) -> SearchResult<S> {
    let mut cov = Coverage::default();
    let mut visited = HashSet::new();
    visited.insert(initial.state_hash());
    let mut queue = VecDeque::from([(initial, Vec::new(), 0usize)]);
    let mut terminals = Vec::new();
    let mut budget_exceeded = false;
    while let Some((state, path, depth)) = queue.pop_front() {
        if state.is_terminal() {
            terminals.push(Terminal { state, path });
            continue;
        }
        if depth >= budget.max_depth {
            budget_exceeded = true;
            continue;
        }
        for (next, taken) in successors(&state, focus, &mut cov) {
            if !visited.insert(next.state_hash()) {
                continue;
            }
            if visited.len() > budget.max_states {
                budget_exceeded = true;
                break;
            }
            let mut p = path.clone();
            p.extend(taken);
            queue.push_back((next, p, depth + 1));
        }
        if visited.len() > budget.max_states {
            budget_exceeded = true;
            break;
        }
    }
    SearchResult { terminals, states: visited.len(), budget_exceeded, coverage: cov }
}

/// A stuck state found by search or symbolic execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub reason: String,
    pub site: String,
    pub path: Vec<String>,
    /// Path constraints, as text.
    pub witness_constraints: Vec<String>,
    /// A concrete packet reproducing the state, as hex.
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
}

/// Diagnostics for the stuck terminals of a single-node search.
pub fn diagnostics(result: &SearchResult<Config>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for t in &result.terminals {
        if let Status::Stuck(s) = &t.state.status {
            out.push(Diagnostic {
                reason: s.reason.code().to_string(),
                site: s.site.clone(),
                path: t.path.iter().map(ToString::to_string).collect(),
                witness_constraints: t.state.constraints.iter().map(|c| c.display(&t.state.atoms).to_string()).collect(),
                witness: None,
                node: None,
            });
        }
    }
    out
}

/// Distinct (port, bytes) output sequences among terminals.
pub fn distinct_outputs(result: &SearchResult<Config>) -> BTreeSet<Vec<(u64, String)>> {
    result
        .terminals
        .iter()
        .map(|t| t.state.output.iter().map(|p| (p.port, p.data.to_string())).collect())
        .collect()
}

#[cfg(test)]
mod tests;
