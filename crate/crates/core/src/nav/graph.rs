//! Static analysis over a [`NavSpec`]: graph construction, path enumeration
//! and consistency findings. All of it is data-agnostic: a guard counts as
//! satisfiable unless it folds to false.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use super::guard::GuardExpr;
use super::spec::NavSpec;
use super::NavError;
use crate::state::StateValue;

/// Paths returned by [`enumerate_paths`] are capped at this many.
pub const MAX_PATHS: usize = 10_000;

/// Cartesian products of declared domains larger than this are not folded.
const MAX_ASSIGNMENTS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub transition: String,
    /// `None` for a transition without cases (stays in place).
    pub case: Option<usize>,
    /// States the transition may fire from.
    pub sources: Vec<usize>,
    /// `None` means a self-loop on each source.
    pub target: Option<usize>,
    pub guard: GuardExpr,
}

impl Edge {
    fn target_from(&self, src: usize) -> usize {
        self.target.unwrap_or(src)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavGraph {
    pub states: Vec<String>,
    pub initial: usize,
    pub edges: Vec<Edge>,
}

pub fn build_graph(spec: &NavSpec) -> NavGraph {
    let all: Vec<usize> = (0..spec.states.len()).collect();
    let mut edges = Vec::new();
    for t in &spec.transitions {
        let sources: Vec<usize> = match &t.from {
            Some(f) => all.iter().copied().filter(|&i| f.admits(&spec.states[i])).collect(),
            None => all.clone(),
        };
        if t.cases.is_empty() {
            edges.push(Edge {
                transition: t.id.clone(),
                case: None,
                sources: sources.clone(),
                target: None,
                guard: GuardExpr::Always,
            });
        }
        for (i, c) in t.cases.iter().enumerate() {
            edges.push(Edge {
                transition: t.id.clone(),
                case: Some(i),
                sources: sources.clone(),
                target: Some(c.to),
                guard: c.when.clone(),
            });
        }
    }
    NavGraph {
        states: spec.states.iter().map(|s| s.name.clone()).collect(),
        initial: spec.initial_state,
        edges,
    }
}

impl NavGraph {
    /// Outgoing `(transition id, target)` pairs per state, skipping edges
    /// whose guard is false on literals alone and cases shadowed by an
    /// earlier case that is true on literals alone.
    pub fn adjacency(&self) -> Vec<Vec<(String, usize)>> {
        let mut adj = vec![Vec::new(); self.states.len()];
        let mut shadowed: Option<&str> = None;
        for e in &self.edges {
            if shadowed.is_some_and(|t| t == e.transition) && e.case.is_some_and(|c| c > 0) {
                continue;
            }
            shadowed = None;
            match e.guard.fold(&BTreeMap::new()) {
                Some(false) => continue,
                Some(true) => shadowed = Some(&e.transition),
                None => {}
            }
            for &s in &e.sources {
                adj[s].push((e.transition.clone(), e.target_from(s)));
            }
        }
        for out in &mut adj {
            out.sort();
            out.dedup();
        }
        adj
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph nav {\n");
        for (i, s) in self.states.iter().enumerate() {
            let shape = if i == self.initial { "doublecircle" } else { "ellipse" };
            let _ = writeln!(out, "  \"{s}\" [shape={shape}];");
        }
        for e in &self.edges {
            let label = if e.guard.is_always() {
                e.transition.clone()
            } else {
                format!("{} [{}]", e.transition, e.guard.to_json()).replace('"', "'")
            };
            for &s in &e.sources {
                let t = e.target_from(s);
                let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{label}\"];", self.states[s], self.states[t]);
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Simple paths from the initial state to `goal`, as transition-id
/// sequences of length at most `max_len`.
pub fn enumerate_paths(spec: &NavSpec, goal: &str, max_len: usize) -> Result<Vec<Vec<String>>, NavError> {
    enumerate_paths_from(spec, spec.initial_state, goal, max_len)
}

/// As [`enumerate_paths`] from an arbitrary start state. Results are sorted
/// by length, then lexicographically by transition ids.
pub fn enumerate_paths_from(
    spec: &NavSpec,
    start: usize,
    goal: &str,
    max_len: usize,
) -> Result<Vec<Vec<String>>, NavError> {
    let goal = spec.state_index(goal).ok_or_else(|| NavError::UnknownGoalState(goal.to_string()))?;
    let adj = build_graph(spec).adjacency();
    let mut found: Vec<Vec<String>> = Vec::new();
    let mut queue: VecDeque<(usize, Vec<String>, Vec<usize>)> = VecDeque::new();
    queue.push_back((start, Vec::new(), vec![start]));
    while let Some((at, path, visited)) = queue.pop_front() {
        if at == goal {
            found.push(path);
            if found.len() >= MAX_PATHS {
                break;
            }
            continue;
        }
        if path.len() == max_len {
            continue;
        }
        for (tid, next) in &adj[at] {
            if visited.contains(next) {
                continue;
            }
            let mut p = path.clone();
            p.push(tid.clone());
            let mut v = visited.clone();
            v.push(*next);
            queue.push_back((*next, p, v));
        }
    }
    found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    found.dedup();
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Unreachable { state: String },
    DeadTransition { transition: String, case: Option<usize>, reason: String },
    DuplicateId { transition: String },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::Unreachable { state } => write!(f, "unreachable: state `{state}`"),
            Finding::DeadTransition { transition, case: Some(c), reason } => {
                write!(f, "dead_transition: `{transition}` case {c}: {reason}")
            }
            Finding::DeadTransition { transition, case: None, reason } => {
                write!(f, "dead_transition: `{transition}`: {reason}")
            }
            Finding::DuplicateId { transition } => write!(f, "duplicate_id: `{transition}`"),
        }
    }
}

/// True when the guard is false under every assignment drawn from the
/// declared domains (refs without a domain stay unknown).
fn unsatisfiable(g: &GuardExpr, domains: &BTreeMap<String, Vec<StateValue>>) -> bool {
    let mut refs = Vec::new();
    g.refs(&mut refs);
    refs.sort();
    refs.dedup();
    let bound: Vec<(&String, &Vec<StateValue>)> =
        refs.iter().filter_map(|r| domains.get(r).map(|d| (r, d))).collect();
    let total = bound.iter().try_fold(1usize, |acc, (_, d)| acc.checked_mul(d.len()));
    match total {
        Some(n) if n <= MAX_ASSIGNMENTS => {}
        _ => return false,
    }
    let mut assignments = vec![BTreeMap::new()];
    for (key, dom) in bound {
        let mut next = Vec::with_capacity(assignments.len() * dom.len());
        for a in &assignments {
            for v in dom {
                let mut a: BTreeMap<String, StateValue> = a.clone();
                a.insert(key.clone(), v.clone());
                next.push(a);
            }
        }
        assignments = next;
    }
    assignments.iter().all(|a| g.fold(a) == Some(false))
}

pub fn validate_spec(spec: &NavSpec) -> Vec<Finding> {
    let mut findings = BTreeSet::new();

    let mut seen = BTreeSet::new();
    for t in &spec.transitions {
        if !seen.insert(t.id.as_str()) {
            findings.insert(Finding::DuplicateId { transition: t.id.clone() });
        }
    }

    let graph = build_graph(spec);
    let mut dead_edges = vec![false; graph.edges.len()];
    for (i, e) in graph.edges.iter().enumerate() {
        if e.sources.is_empty() {
            dead_edges[i] = true;
            findings.insert(Finding::DeadTransition {
                transition: e.transition.clone(),
                case: None,
                reason: "from constraint admits no declared state".into(),
            });
        } else if unsatisfiable(&e.guard, &spec.domains) {
            dead_edges[i] = true;
            findings.insert(Finding::DeadTransition {
                transition: e.transition.clone(),
                case: e.case,
                reason: "guard is unsatisfiable over the declared domains".into(),
            });
        }
    }

    let mut reached = vec![false; spec.states.len()];
    reached[spec.initial_state] = true;
    let mut queue = VecDeque::from([spec.initial_state]);
    while let Some(at) = queue.pop_front() {
        for (i, e) in graph.edges.iter().enumerate() {
            if dead_edges[i] || !e.sources.contains(&at) {
                continue;
            }
            let t = e.target_from(at);
            if !reached[t] {
                reached[t] = true;
                queue.push_back(t);
            }
        }
    }
    for (i, r) in reached.iter().enumerate() {
        if !r {
            findings.insert(Finding::Unreachable { state: spec.states[i].name.clone() });
        }
    }
    findings.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn spec(v: serde_json::Value) -> NavSpec {
        NavSpec::parse_str(&v.to_string()).unwrap()
    }

    fn linear() -> NavSpec {
        spec(json!({
            "app_id": "x", "initial_state": "a",
            "states": [{"name": "a", "path": "/a"}, {"name": "b", "path": "/b"}, {"name": "c", "path": "/c"}],
            "transitions": [
                {"id": "ab", "from": {"path": "/a"}, "cases": [{"to": "b"}]},
                {"id": "bc", "from": {"path": "/b"}, "cases": [{"to": "c"}]}
            ]
        }))
    }

    #[test]
    fn edge_per_transition_case() {
        let g = build_graph(&linear());
        assert_eq!(g.edges.len(), 2);
        let two = spec(json!({
            "app_id": "x", "initial_state": "a",
            "states": [{"name": "a", "path": "/a"}, {"name": "b", "path": "/b"}, {"name": "c", "path": "/c"}],
            "transitions": [{"id": "t", "from": {"path": "/a"}, "cases": [
                {"to": "b", "when": {"op": "eq", "left": {"ref": "appState", "key": "k"}, "right": 1}},
                {"to": "c"}
            ]}, {"id": "stay"}]
        }));
        let g = build_graph(&two);
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.edges[0].sources, g.edges[1].sources);
        assert!(g.to_dot().contains("\"a\" -> \"c\""));
    }

    #[test]
    fn paths_on_linear_spec() {
        let s = linear();
        assert_eq!(enumerate_paths(&s, "c", 5).unwrap(), vec![vec!["ab".to_string(), "bc".to_string()]]);
        assert_eq!(enumerate_paths(&s, "a", 5).unwrap(), vec![Vec::<String>::new()]);
        assert!(enumerate_paths(&s, "c", 1).unwrap().is_empty());
        assert!(matches!(enumerate_paths(&s, "zz", 3), Err(NavError::UnknownGoalState(_))));
    }

    #[test]
    fn findings() {
        let s = spec(json!({
            "app_id": "x", "initial_state": "a",
            "states": [{"name": "a", "path": "/a"}, {"name": "b", "path": "/b"}, {"name": "orphan", "path": "/o"}],
            "domains": {"appState:flag": [true, false]},
            "transitions": [
                {"id": "t", "from": {"path": "/a"}, "cases": [{"to": "b"}]},
                {"id": "t", "from": {"path": "/b"}, "cases": [{"to": "a"}]},
                {"id": "lit", "from": {"path": "/a"}, "cases": [{"to": "orphan", "when": {"op": "eq", "left": 1, "right": 2}}]},
                {"id": "dom", "from": {"path": "/b"}, "cases": [{"to": "orphan", "when": {"op": "and", "args": [
                    {"op": "eq", "left": {"ref": "appState", "key": "flag"}, "right": true},
                    {"op": "eq", "left": {"ref": "appState", "key": "flag"}, "right": false}
                ]}}]}
            ]
        }));
        let f = validate_spec(&s);
        assert!(f.contains(&Finding::Unreachable { state: "orphan".into() }));
        assert!(f.contains(&Finding::DuplicateId { transition: "t".into() }));
        assert!(f.iter().any(|x| matches!(x, Finding::DeadTransition { transition, .. } if transition == "lit")));
        assert!(f.iter().any(|x| matches!(x, Finding::DeadTransition { transition, .. } if transition == "dom")));
        assert_eq!(f.len(), 4);
        assert!(validate_spec(&linear()).is_empty());
    }
}
